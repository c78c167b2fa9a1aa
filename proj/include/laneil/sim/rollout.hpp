#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "laneil/core/error.hpp"
#include "laneil/sim/lane_pose.hpp"
#include "laneil/sim/policy.hpp"

namespace laneil::sim {

struct TraceRow {
  double t = 0.0;
  Pose pose;
  double d = NAN;
  double phi = NAN;
  Action action;
  bool perturbed = false;
  double path_length = 0.0;  // accumulated before this step
};

struct RolloutResult {
  RobotState final_state;
  bool infraction = false;
  int steps = 0;
  std::vector<TraceRow> trace;

  double tiles() const { return tiles_driven(final_state.path_length); }
};

// Supplies the preprocessed frame for a state, for policies that want one.
using FrameSource = std::function<const InputTensor*(const RobotState&, int step)>;

// Called after the policy decided, before the state advances. Returning
// false stops the rollout.
using StepHook = std::function<bool(const RobotState&, const Decision&, int step)>;

struct RolloutOptions {
  double dt = kDefaultDt;
  DiffDrive drive;
  bool keep_trace = false;
  FrameSource frames;
  StepHook hook;
};

// Runs a policy from `start` for time_limit seconds or until the first
// infraction. Standing still is not an infraction.
inline RolloutResult rollout(const TrackMap& map, Policy& policy, const Pose& start, double time_limit,
                             const RolloutOptions& opt = {}) {
  require(!is_infraction(map, start), ErrorKind::InvalidArgument, "start pose is off the road");
  require(opt.dt > 0 && time_limit >= 0, ErrorKind::InvalidArgument, "bad rollout timing");
  require(!policy.needs_frame() || opt.frames, ErrorKind::InvalidArgument, "policy needs frames but none supplied");
  const int n_steps = static_cast<int>(std::lround(time_limit / opt.dt));
  RolloutResult res;
  RobotState s;
  s.pose = start;
  s.pose.theta = wrap_angle(s.pose.theta);
  for (int k = 0; k < n_steps; ++k) {
    const InputTensor* frame = policy.needs_frame() ? opt.frames(s, k) : nullptr;
    Decision dec = policy.act({map, s, opt.dt, frame});
    dec.action = clamp_action(dec.action);
    if (opt.keep_trace) {
      TraceRow row{s.t, s.pose, NAN, NAN, dec.action, dec.perturbed, s.path_length};
      if (auto lp = lane_pose(map, s.pose)) {
        row.d = lp->d;
        row.phi = lp->phi;
      }
      res.trace.push_back(row);
    }
    if (opt.hook && !opt.hook(s, dec, k)) break;
    s = step_dynamics(s, dec.action, opt.dt, opt.drive);
    ++res.steps;
    if (is_infraction(map, s.pose)) {
      res.infraction = true;
      break;
    }
  }
  res.final_state = s;
  return res;
}

}  // namespace laneil::sim
