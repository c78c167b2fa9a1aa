#pragma once

#include <algorithm>

#include "laneil/core/error.hpp"
#include "laneil/sim/dynamics.hpp"
#include "laneil/sim/lane_pose.hpp"

namespace laneil::expert {

struct PDGains {
  double kp = 16.0;  // per meter of lateral offset
  double kd = 4.0;   // per radian of heading error
  double v_nominal = 0.7;
  double steer_scale = 0.25;

  void validate() const {
    require(kp > 0 && kd > 0 && steer_scale > 0, ErrorKind::Config, "PD gains must be positive");
    require(v_nominal > 0 && v_nominal <= 1, ErrorKind::Config, "v_nominal must lie in (0, 1]");
  }

  friend bool operator==(const PDGains&, const PDGains&) = default;
};

// The heading term acts as the derivative: at constant speed phi is
// proportional to the rate of change of d.
inline double steer_command(const sim::LanePose& lp, const PDGains& g) { return -(g.kp * lp.d + g.kd * lp.phi); }

inline sim::Action steer_to_action(double omega_cmd, const PDGains& g) {
  return {std::clamp(g.v_nominal - g.steer_scale * omega_cmd, -1.0, 1.0),
          std::clamp(g.v_nominal + g.steer_scale * omega_cmd, -1.0, 1.0)};
}

inline sim::Action pd_action(const sim::LanePose& lp, const PDGains& g) {
  return steer_to_action(steer_command(lp, g), g);
}

}  // namespace laneil::expert
