#pragma once

#include <algorithm>
#include <cmath>

#include "laneil/sim/geometry.hpp"

namespace laneil::sim {

// Wheel voltage commands, each in [-1, 1].
struct Action {
  double v_left = 0.0;
  double v_right = 0.0;

  friend bool operator==(const Action&, const Action&) = default;
};

inline Action clamp_action(Action a) {
  return {std::clamp(a.v_left, -1.0, 1.0), std::clamp(a.v_right, -1.0, 1.0)};
}

struct RobotState {
  Pose pose;
  double t = 0.0;
  double path_length = 0.0;
};

struct DiffDrive {
  double wheel_radius = 0.0318;
  double baseline = 0.102;
  double omega_max = 0.6 / 0.0318;  // full command gives 0.6 m/s wheel rim speed

  double max_speed() const { return wheel_radius * omega_max; }
};

inline constexpr double kDefaultDt = 1.0 / 15.0;

// Exact unicycle integration over dt with wheel speeds held constant.
inline RobotState step_dynamics(const RobotState& s, Action a, double dt, const DiffDrive& dd = {}) {
  const double wl = a.v_left * dd.omega_max;
  const double wr = a.v_right * dd.omega_max;
  const double v = dd.wheel_radius * (wr + wl) / 2.0;
  const double w = dd.wheel_radius * (wr - wl) / dd.baseline;
  RobotState out = s;
  const double th = s.pose.theta;
  if (std::abs(w) < 1e-9) {
    out.pose.x += v * dt * std::cos(th);
    out.pose.y += v * dt * std::sin(th);
  } else {
    const double th1 = th + w * dt;
    out.pose.x += v / w * (std::sin(th1) - std::sin(th));
    out.pose.y -= v / w * (std::cos(th1) - std::cos(th));
    out.pose.theta = th1;
  }
  out.pose.theta = wrap_angle(out.pose.theta);
  out.path_length += std::abs(v) * dt;
  out.t += dt;
  return out;
}

}  // namespace laneil::sim
