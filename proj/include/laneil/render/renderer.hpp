#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "laneil/core/rng.hpp"
#include "laneil/render/camera.hpp"
#include "laneil/render/domain.hpp"
#include "laneil/render/image.hpp"
#include "laneil/sim/track_map.hpp"

namespace laneil::render {

enum class Surface : std::uint8_t { Road, Background, White, Yellow };

inline bool in_dash(double s, double dash_length, double dash_gap) {
  const double period = dash_length + dash_gap;
  double m = std::fmod(s, period);
  if (m < 0) m += period;
  return m < dash_length;
}

// Ground marking under a world point. Straight tiles carry white edge lines
// along both borders and a dashed yellow divider on the tile axis; curves
// carry the same bands bent around the turning corner; intersections are
// plain road with white lines on closed sides and at the corners.
inline Surface surface_at(const sim::TrackMap& map, sim::Vec2 p, double dash_length, double dash_gap) {
  using namespace sim;
  const auto t = map.tile_at(p);
  if (!t) return Surface::Background;
  const Tile& tile = map.tile(*t);
  const Vec2 c = map.tile_center(*t);
  const double lx = p.x - c.x, ly = p.y - c.y;
  const double half = kTileSize / 2;
  const double edge_in = half - kEdgeLineWidth;
  const double div = kDividerWidth / 2;

  auto straight = [&](double offset, double along) {
    if (std::abs(offset) >= edge_in) return Surface::White;
    if (std::abs(offset) <= div && in_dash(along, dash_length, dash_gap)) return Surface::Yellow;
    return Surface::Road;
  };
  auto curve = [&](double cx, double cy) {
    const double dx = lx - cx, dy = ly - cy;
    const double rho = std::hypot(dx, dy);
    if (rho > kTileSize) return Surface::Background;
    if (rho >= kTileSize - kEdgeLineWidth || rho <= kEdgeLineWidth) return Surface::White;
    if (std::abs(rho - half) <= div) {
      const double angle = std::atan2(std::abs(dy), std::abs(dx));
      if (in_dash(half * angle, dash_length, dash_gap)) return Surface::Yellow;
    }
    return Surface::Road;
  };

  switch (tile.kind) {
    case TileKind::Floor: return Surface::Background;
    case TileKind::StraightEW: return straight(ly, lx + half);
    case TileKind::StraightNS: return straight(lx, ly + half);
    case TileKind::CurveNE: return curve(half, half);
    case TileKind::CurveNW: return curve(-half, half);
    case TileKind::CurveSE: return curve(half, -half);
    case TileKind::CurveSW: return curve(-half, -half);
    case TileKind::Intersection4:
    case TileKind::Intersection3: {
      if (std::abs(lx) >= edge_in && std::abs(ly) >= edge_in) return Surface::White;
      if (tile.kind == TileKind::Intersection3) {
        const Vec2 n = edge_dir(tile.closed);
        if (lx * n.x + ly * n.y >= edge_in) return Surface::White;
      }
      return Surface::Road;
    }
  }
  return Surface::Background;
}

inline Rgb palette_color(const Palette& pal, Surface s) {
  switch (s) {
    case Surface::Road: return pal.road;
    case Surface::Background: return pal.background;
    case Surface::White: return pal.white;
    case Surface::Yellow: return pal.yellow;
  }
  return pal.background;
}

inline Rgb ground_texture(const sim::TrackMap& map, sim::Vec2 world_point, const DomainConfig& domain) {
  return palette_color(domain.palette, surface_at(map, world_point, domain.dash_length, domain.dash_gap));
}

// Background objects seen above the horizon, anchored to world azimuth.
struct ClutterRect {
  double azimuth = 0.0;
  double half_width = 0.0;
  double elev_lo = 0.0;
  double elev_hi = 0.0;
  Rgb color;
};

inline std::vector<ClutterRect> make_clutter(const DomainConfig& domain) {
  std::vector<ClutterRect> out;
  RandomStream rng(domain.clutter_seed, "clutter");
  for (int i = 0; i < domain.clutter_count; ++i) {
    ClutterRect r;
    r.azimuth = rng.uniform(-sim::kPi, sim::kPi);
    r.half_width = rng.uniform(0.05, 0.3);
    r.elev_lo = rng.uniform(0.0, 0.1);
    r.elev_hi = r.elev_lo + rng.uniform(0.05, 0.4);
    r.color = {static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
               static_cast<std::uint8_t>(rng.below(256))};
    out.push_back(r);
  }
  return out;
}

// Renders single pixels of one frame. Each pixel is a pure function of
// (map, pose, camera, domain, frame_seed, row, col), so any subset of pixels
// can be evaluated in any order with identical results.
class FrameRenderer {
 public:
  FrameRenderer(const sim::TrackMap& map, const sim::Pose& pose, const CameraModel& camera, const DomainConfig& domain,
                std::uint64_t frame_seed)
      : map_(map),
        pose_(pose),
        camera_(camera),
        domain_(domain),
        frame_seed_(frame_seed),
        clutter_(make_clutter(domain)),
        cos_(std::cos(pose.theta)),
        sin_(std::sin(pose.theta)) {}

  // Scene color before lighting and noise.
  Rgb scene(int row, int col) const {
    const double u = col + 0.5, v = row + 0.5;
    if (auto g = camera_.project_pixel(u, v)) {
      const sim::Vec2 w{pose_.x + cos_ * g->x - sin_ * g->y, pose_.y + sin_ * g->x + cos_ * g->y};
      return ground_texture(map_, w, domain_);
    }
    if (!clutter_.empty()) {
      const Vec3 d = camera_.ray(u, v);
      const double az = sim::wrap_angle(pose_.theta + std::atan2(d.y, d.x));
      const double el = std::atan2(d.z, std::hypot(d.x, d.y));
      for (const auto& c : clutter_) {
        if (el >= c.elev_lo && el <= c.elev_hi && std::abs(sim::wrap_angle(az - c.azimuth)) <= c.half_width)
          return c.color;
      }
    }
    return domain_.palette.sky;
  }

  Rgb pixel(int row, int col) const {
    const Rgb s = scene(row, col);
    const std::uint64_t base = (static_cast<std::uint64_t>(row) * camera_.width + col) * 3;
    std::uint8_t out[3];
    for (int ch = 0; ch < 3; ++ch) {
      double val = domain_.lighting_gain * s[ch] + domain_.lighting_bias[ch];
      if (domain_.noise_sigma > 0.0) val += domain_.noise_sigma * normal_at(frame_seed_, kNoiseStream, base + ch);
      out[ch] = static_cast<std::uint8_t>(std::clamp(std::nearbyint(val), 0.0, 255.0));
    }
    return {out[0], out[1], out[2]};
  }

  const CameraModel& camera() const { return camera_; }

 private:
  static constexpr std::uint64_t kNoiseStream = stream_id("pixel-noise");

  const sim::TrackMap& map_;
  sim::Pose pose_;
  CameraModel camera_;
  const DomainConfig& domain_;
  std::uint64_t frame_seed_;
  std::vector<ClutterRect> clutter_;
  double cos_;
  double sin_;
};

inline Image render_frame(const sim::TrackMap& map, const sim::Pose& pose, const CameraModel& camera,
                          const DomainConfig& domain, std::uint64_t frame_seed) {
  FrameRenderer fr(map, pose, camera, domain, frame_seed);
  Image img(camera.height, camera.width);
  for (int r = 0; r < camera.height; ++r)
    for (int c = 0; c < camera.width; ++c) img.set(r, c, fr.pixel(r, c));
  return img;
}

}  // namespace laneil::render
