#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "laneil/core/error.hpp"
#include "laneil/render/domain.hpp"
#include "laneil/render/preprocess.hpp"

namespace laneil::data {

struct Sample {
  InputTensor input;
  std::array<float, 2> action{0.0f, 0.0f};  // v_left, v_right
  std::uint8_t domain_id = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::map<std::string, std::size_t> provenance;  // source name -> sample count

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  void add(Sample s, const std::string& source) {
    samples.push_back(std::move(s));
    ++provenance[source];
  }

  void check_provenance() const {
    std::size_t total = 0;
    for (const auto& [name, n] : provenance) total += n;
    require(total == samples.size(), ErrorKind::InvalidArgument,
            "provenance counts " + std::to_string(total) + " do not sum to dataset length " +
                std::to_string(samples.size()));
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Provenance derived from the per-sample domain tags.
inline std::map<std::string, std::size_t> provenance_from_tags(const std::vector<Sample>& samples) {
  std::map<std::string, std::size_t> out;
  for (const auto& s : samples) ++out[render::domain_name(s.domain_id)];
  return out;
}

// Samples carrying one domain tag, in dataset order.
inline std::vector<const Sample*> by_domain(const Dataset& ds, std::uint8_t tag) {
  std::vector<const Sample*> out;
  for (const auto& s : ds.samples)
    if (s.domain_id == tag) out.push_back(&s);
  return out;
}

inline std::vector<const Sample*> view_of(const Dataset& ds) {
  std::vector<const Sample*> out;
  out.reserve(ds.size());
  for (const auto& s : ds.samples) out.push_back(&s);
  return out;
}

}  // namespace laneil::data
