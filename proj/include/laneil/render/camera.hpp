#pragma once

#include <cmath>
#include <cstdint>
#include <optional>

#include "laneil/core/rng.hpp"
#include "laneil/sim/geometry.hpp"

namespace laneil::render {

inline constexpr double deg(double d) { return d * sim::kPi / 180.0; }

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// Forward-looking pinhole camera rigidly mounted on the robot. Robot frame:
// x forward, y left, z up. Pixel coordinates are continuous with (0,0) at the
// top-left image corner; pixel (col,row) has its center at (col+0.5, row+0.5).
struct CameraModel {
  int width = 640;
  int height = 480;
  double horizontal_fov = deg(100.0);
  double mount_height = 0.108;
  double pitch = deg(19.0);  // downward positive
  double forward_offset = 0.06;

  double focal() const { return (width / 2.0) / std::tan(horizontal_fov / 2.0); }
  double half_vertical_fov() const { return std::atan((height / 2.0) / focal()); }

  // Ray direction (unnormalized) through continuous pixel coordinates.
  Vec3 ray(double u, double v) const {
    const double f = focal();
    const double xc = (u - width / 2.0) / f;
    const double yc = (v - height / 2.0) / f;
    const double sp = std::sin(pitch), cp = std::cos(pitch);
    return {cp - yc * sp, -xc, -sp - yc * cp};
  }

  // Row coordinate of the horizon line; rays below it hit the ground.
  double horizon_v() const { return height / 2.0 - focal() * std::tan(pitch); }

  // Ground intersection in the robot frame, or nullopt when the ray does not descend.
  std::optional<sim::Vec2> project_pixel(double u, double v) const {
    const Vec3 d = ray(u, v);
    if (!(d.z < 0.0)) return std::nullopt;
    const double t = mount_height / -d.z;
    return sim::Vec2{forward_offset + t * d.x, t * d.y};
  }

  bool valid() const { return width == 640 && height == 480 && pitch > 0.0 && pitch < sim::kPi / 2; }
};

// Per-episode mounting perturbation bounds.
struct ExtrinsicsJitter {
  double pitch = 0.0;   // radians, symmetric bound
  double height = 0.0;  // meters, symmetric bound

  bool enabled() const { return pitch > 0.0 || height > 0.0; }
};

inline CameraModel jitter_camera(const CameraModel& base, const ExtrinsicsJitter& jitter, std::uint64_t episode_seed) {
  if (!jitter.enabled()) return base;
  RandomStream rng(episode_seed, "extrinsics");
  CameraModel cam = base;
  cam.pitch += rng.uniform(-jitter.pitch, jitter.pitch);
  cam.mount_height += rng.uniform(-jitter.height, jitter.height);
  return cam;
}

}  // namespace laneil::render
