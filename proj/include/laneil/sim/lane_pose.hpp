#pragma once

#include <cmath>
#include <optional>

#include "laneil/sim/geometry.hpp"
#include "laneil/sim/track_map.hpp"

namespace laneil::sim {

struct LanePose {
  double d = 0.0;            // lateral offset, positive left of the centerline
  double phi = 0.0;          // heading error against the centerline tangent
  bool in_lane = true;
  double tangent_dir = 0.0;  // centerline tangent at the nearest point
  const LaneSegment* lane = nullptr;
};

// Lane pose against the tile's directed centerlines. Among the candidate
// travel directions the one with the smallest |phi| wins, ties going to the
// smaller |d|. Returns nullopt when the robot is off the road.
inline std::optional<LanePose> lane_pose(const TrackMap& map, const Pose& pose) {
  const auto t = map.tile_at(pose.position());
  if (!t || !map.tile(*t).drivable()) return std::nullopt;
  std::optional<LanePose> best;
  for (const auto& lane : map.lanes(*t)) {
    const auto proj = lane.project(pose.position());
    LanePose lp;
    lp.d = proj.offset;
    lp.phi = wrap_angle(pose.theta - proj.heading);
    lp.tangent_dir = proj.heading;
    lp.in_lane = std::abs(lp.d) <= kLaneHalfWidth;
    lp.lane = &lane;
    if (!best) {
      best = lp;
      continue;
    }
    const double dphi = std::abs(lp.phi) - std::abs(best->phi);
    if (dphi < -1e-12 || (std::abs(dphi) <= 1e-12 && std::abs(lp.d) < std::abs(best->d))) best = lp;
  }
  return best;
}

// Major infraction: robot center over floor or outside the grid.
inline bool is_infraction(const TrackMap& map, const Pose& pose) { return !map.drivable_at(pose.position()); }

inline double tiles_driven(double path_length) { return path_length / kTileSize; }

}  // namespace laneil::sim
