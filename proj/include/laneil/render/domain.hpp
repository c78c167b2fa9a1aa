#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "laneil/core/error.hpp"
#include "laneil/render/camera.hpp"
#include "laneil/render/image.hpp"

namespace laneil::render {

struct Palette {
  Rgb road;
  Rgb background;
  Rgb white;
  Rgb yellow;
  Rgb sky;
};

// Visual appearance of one data source.
struct DomainConfig {
  std::string id;
  std::uint8_t tag = 0;  // domain_id stored with every sample
  Palette palette;
  double lighting_gain = 1.0;
  std::array<double, 3> lighting_bias{0.0, 0.0, 0.0};
  double noise_sigma = 0.0;  // gray levels
  int clutter_count = 0;
  std::uint64_t clutter_seed = 0;
  double dash_length = 0.1;  // meters
  double dash_gap = 0.1;     // meters
  ExtrinsicsJitter extrinsics_jitter;

  void validate() const {
    require(lighting_gain > 0.0, ErrorKind::InvalidArgument, "domain " + id + ": lighting_gain must be > 0");
    require(noise_sigma >= 0.0, ErrorKind::InvalidArgument, "domain " + id + ": noise_sigma must be >= 0");
    require(dash_length > 0.0 && dash_gap > 0.0, ErrorKind::InvalidArgument,
            "domain " + id + ": dash_length and dash_gap must be > 0");
    require(clutter_count >= 0, ErrorKind::InvalidArgument, "domain " + id + ": clutter_count must be >= 0");
  }
};

inline constexpr std::array<std::string_view, 4> kDomainIds{"SIM-LP", "SIM-IS", "PSEUDO-REAL-A", "PSEUDO-REAL-B"};

inline Palette clean_palette() {
  return {
      .road = {62, 62, 66},
      .background = {46, 112, 58},
      .white = {235, 235, 235},
      .yellow = {232, 196, 28},
      .sky = {150, 192, 232},
  };
}

// The two simulation sources share one clean look; the pseudo-real sources
// shift color, exposure, noise, background clutter and mounting.
inline std::vector<DomainConfig> domain_presets() {
  DomainConfig sim_lp;
  sim_lp.id = "SIM-LP";
  sim_lp.tag = 0;
  sim_lp.palette = clean_palette();

  DomainConfig sim_is = sim_lp;
  sim_is.id = "SIM-IS";
  sim_is.tag = 1;

  DomainConfig real_a;
  real_a.id = "PSEUDO-REAL-A";
  real_a.tag = 2;
  real_a.palette = {
      .road = {92, 78, 66},
      .background = {168, 128, 88},
      .white = {246, 230, 204},
      .yellow = {244, 168, 44},
      .sky = {212, 190, 160},
  };
  real_a.lighting_gain = 1.15;
  real_a.lighting_bias = {8.0, 2.0, -6.0};
  real_a.noise_sigma = 6.0;
  real_a.clutter_count = 12;
  real_a.clutter_seed = 0xA11CE;
  real_a.dash_length = 0.08;
  real_a.dash_gap = 0.12;

  DomainConfig real_b;
  real_b.id = "PSEUDO-REAL-B";
  real_b.tag = 3;
  real_b.palette = {
      .road = {38, 44, 64},
      .background = {82, 92, 118},
      .white = {196, 210, 240},
      .yellow = {196, 188, 70},
      .sky = {116, 136, 172},
  };
  real_b.lighting_gain = 0.8;
  real_b.lighting_bias = {-4.0, 0.0, 10.0};
  real_b.noise_sigma = 10.0;
  real_b.clutter_count = 20;
  real_b.clutter_seed = 0xB0B;
  real_b.dash_length = 0.12;
  real_b.dash_gap = 0.08;
  real_b.extrinsics_jitter = {deg(2.0), 0.008};

  return {sim_lp, sim_is, real_a, real_b};
}

inline std::optional<DomainConfig> find_domain(const std::vector<DomainConfig>& domains, std::string_view id) {
  for (const auto& d : domains)
    if (d.id == id) return d;
  return std::nullopt;
}

inline DomainConfig domain_preset(std::string_view id) {
  auto d = find_domain(domain_presets(), id);
  require(d.has_value(), ErrorKind::InvalidArgument, "unknown domain " + std::string(id));
  return *d;
}

inline std::string domain_name(std::uint8_t tag) {
  return tag < kDomainIds.size() ? std::string(kDomainIds[tag]) : "domain-" + std::to_string(tag);
}

}  // namespace laneil::render
