#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "laneil/core/rng.hpp"
#include "laneil/dataset/dataset.hpp"
#include "laneil/render/observation.hpp"
#include "laneil/sim/lane_pose.hpp"
#include "laneil/sim/policy.hpp"

namespace laneil::data {

struct CollectOptions {
  std::size_t n_frames = 2000;
  std::uint64_t seed = 0;
  double episode_s = 10.0;  // episodes restart from a fresh spawn after this long
  bool drop_perturbed = false;
  double dt = sim::kDefaultDt;
  sim::DiffDrive drive;
};

// Uniform spawn on a lane centerline of a non-intersection tile.
inline sim::Pose spawn_pose(const sim::TrackMap& map, std::uint64_t seed) {
  std::vector<const sim::LaneSegment*> lanes;
  for (const auto& t : map.drivable_tiles()) {
    if (map.tile(t).is_intersection()) continue;
    for (const auto& l : map.lanes(t)) lanes.push_back(&l);
  }
  require(!lanes.empty(), ErrorKind::InvalidArgument, "map " + map.name() + " has no lane to spawn on");
  RandomStream rng(seed, "spawn");
  const auto* lane = lanes[rng.below(lanes.size())];
  const double s = rng.uniform(0.0, lane->length());
  const auto p = lane->point_at(s);
  return {p.x, p.y, lane->heading_at(s)};
}

// Drives the policy through the map and records (frame, executed action)
// pairs. An infraction or the end of an episode respawns the robot.
inline Dataset collect(const sim::TrackMap& map, sim::Policy& policy, const render::DomainConfig& domain,
                       const render::CameraModel& camera, const CollectOptions& opt) {
  require(opt.n_frames > 0, ErrorKind::InvalidArgument, "n_frames must be positive");
  require(opt.episode_s > 0 && opt.dt > 0, ErrorKind::InvalidArgument, "episode length and dt must be positive");
  domain.validate();
  Dataset ds;
  ds.samples.reserve(opt.n_frames);
  const long steps_per_episode = std::max(1L, std::lround(opt.episode_s / opt.dt));
  std::uint64_t frame_counter = 0;
  std::uint64_t idle_episodes = 0;
  for (std::uint64_t episode = 0; ds.size() < opt.n_frames; ++episode) {
    const std::uint64_t ep_seed = derive_seed(opt.seed, "episode", episode);
    const render::CameraModel cam = render::jitter_camera(camera, domain.extrinsics_jitter, ep_seed);
    sim::RobotState state;
    state.pose = spawn_pose(map, ep_seed);
    policy.reset(ep_seed);
    const std::size_t before = ds.size();
    for (long k = 0; k < steps_per_episode && ds.size() < opt.n_frames; ++k) {
      const std::uint64_t frame_seed = derive_seed(opt.seed, "frame", frame_counter++);
      const InputTensor obs = render::render_observation(map, state.pose, cam, domain, frame_seed);
      sim::Decision dec = policy.act({map, state, opt.dt, &obs});
      dec.action = sim::clamp_action(dec.action);
      if (!(opt.drop_perturbed && dec.perturbed)) {
        Sample s;
        s.input = obs;
        s.action = {static_cast<float>(dec.action.v_left), static_cast<float>(dec.action.v_right)};
        s.domain_id = domain.tag;
        ds.add(std::move(s), domain.id);
      }
      state = sim::step_dynamics(state, dec.action, opt.dt, opt.drive);
      if (sim::is_infraction(map, state.pose)) break;
    }
    idle_episodes = ds.size() == before ? idle_episodes + 1 : 0;
    require(idle_episodes < 1000, ErrorKind::Runtime, "collection made no progress over 1000 episodes");
  }
  return ds;
}

}  // namespace laneil::data
