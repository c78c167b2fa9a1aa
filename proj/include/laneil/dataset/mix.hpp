#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "laneil/core/rng.hpp"
#include "laneil/dataset/dataset.hpp"

namespace laneil::data {

struct NamedSource {
  std::string name;
  const Dataset* data = nullptr;
};

struct SourceSize {
  std::string name;
  std::size_t size = 0;
};

// Picks total/k samples from each of k sources without replacement and
// returns them in a seeded interleaved order. Entries are (source, index).
inline std::vector<std::pair<std::size_t, std::size_t>> mix_indices(const std::vector<SourceSize>& sources,
                                                                     std::size_t total, std::uint64_t seed) {
  require(!sources.empty(), ErrorKind::InvalidArgument, "mix needs at least one source");
  const std::size_t k = sources.size();
  require(total % k == 0, ErrorKind::InvalidArgument,
          "total " + std::to_string(total) + " is not divisible by " + std::to_string(k) + " sources");
  const std::size_t each = total / k;
  std::vector<std::pair<std::size_t, std::size_t>> picked;
  picked.reserve(total);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t have = sources[i].size;
    require(have >= each, ErrorKind::InvalidArgument,
            "source " + sources[i].name + " short by " + std::to_string(each - have));
    RandomStream rng(derive_seed(seed, "mix-draw", i), "draw");
    const auto perm = permutation(have, rng);
    for (std::size_t j = 0; j < each; ++j) picked.emplace_back(i, perm[j]);
  }
  RandomStream order(seed, "mix-order");
  shuffle(picked, order);
  return picked;
}

inline std::vector<std::pair<std::size_t, std::size_t>> mix_indices(const std::vector<NamedSource>& sources,
                                                                     std::size_t total, std::uint64_t seed) {
  std::vector<SourceSize> sizes;
  for (const auto& s : sources) sizes.push_back({s.name, s.data->size()});
  return mix_indices(sizes, total, seed);
}

inline Dataset mix_equal(const std::vector<NamedSource>& sources, std::size_t total, std::uint64_t seed) {
  Dataset out;
  out.samples.reserve(total);
  for (const auto& [src, idx] : mix_indices(sources, total, seed))
    out.add(sources[src].data->samples[idx], sources[src].name);
  return out;
}

inline std::size_t validation_size(std::size_t n, double val_fraction) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
}

// Seeded shuffle then partition: the first round(n * val_fraction) shuffled
// samples form the validation part. Returns (train, val) index lists.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double val_fraction,
                                                                                   std::uint64_t seed) {
  require(val_fraction > 0 && val_fraction < 1, ErrorKind::InvalidArgument, "val_fraction must lie in (0, 1)");
  RandomStream rng(seed, "split");
  const auto perm = permutation(n, rng);
  const std::size_t n_val = validation_size(n, val_fraction);
  std::vector<std::size_t> val(perm.begin(), perm.begin() + n_val);
  std::vector<std::size_t> train(perm.begin() + n_val, perm.end());
  return {std::move(train), std::move(val)};
}

inline std::pair<Dataset, Dataset> split(const Dataset& ds, double val_fraction, std::uint64_t seed) {
  const auto [train_idx, val_idx] = split_indices(ds.size(), val_fraction, seed);
  auto gather = [&](const std::vector<std::size_t>& idx) {
    Dataset out;
    out.samples.reserve(idx.size());
    for (auto i : idx) out.add(ds.samples[i], render::domain_name(ds.samples[i].domain_id));
    return out;
  };
  return {gather(train_idx), gather(val_idx)};
}

}  // namespace laneil::data
