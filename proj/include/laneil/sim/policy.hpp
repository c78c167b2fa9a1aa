#pragma once

#include <cstdint>

#include "laneil/sim/dynamics.hpp"
#include "laneil/sim/track_map.hpp"

namespace laneil {
struct InputTensor;
}

namespace laneil::sim {

struct StepContext {
  const TrackMap& map;
  const RobotState& state;
  double dt = kDefaultDt;
  const InputTensor* frame = nullptr;  // set only for policies that ask for frames
};

struct Decision {
  Action action;
  bool perturbed = false;
};

// A driving policy. Instances carry per-episode state, so each concurrent
// rollout owns its own instance.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void reset(std::uint64_t episode_seed) { (void)episode_seed; }
  virtual bool needs_frame() const { return false; }
  virtual Decision act(const StepContext& ctx) = 0;
};

}  // namespace laneil::sim
