#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "laneil/core/rng.hpp"
#include "laneil/expert/maneuver.hpp"
#include "laneil/expert/pd.hpp"
#include "laneil/sim/lane_pose.hpp"
#include "laneil/sim/policy.hpp"
#include "laneil/sim/rollout.hpp"

namespace laneil::expert {

struct Perturbation {
  double rate = 0.0;       // expected burst starts per second
  double burst = 0.3;      // seconds
  double magnitude = 0.3;  // bound on the offset, in wheel command units, added to the steering term

  void validate() const {
    require(rate >= 0 && burst > 0, ErrorKind::Config, "perturbation rate must be >= 0 and burst > 0");
    require(magnitude >= 0 && magnitude <= 1, ErrorKind::Config, "perturbation magnitude must lie in [0, 1]");
  }
};

enum class RouteChoice { Random, Straight, Left, Right };

struct ExpertConfig {
  PDGains gains;
  TurnShapes shapes = seed_shapes(PDGains{}, sim::kDefaultDt);
  Perturbation perturb;
  RouteChoice routes = RouteChoice::Random;
  double dt = sim::kDefaultDt;
  sim::DiffDrive drive;

  ManeuverTable table() const { return build_table(shapes, gains, dt, drive); }
};

// Edge through which a robot with this heading enters a tile.
inline sim::Edge entry_edge(const sim::Tile& tile, double theta) {
  sim::Edge best = sim::Edge::N;
  double best_dot = -2.0;
  const sim::Vec2 h = sim::unit(theta);
  for (auto e : sim::kAllEdges) {
    if (!tile.open(e)) continue;
    const double dot = h.dot(sim::edge_dir(sim::opposite(e)));
    if (dot > best_dot) {
      best_dot = dot;
      best = e;
    }
  }
  return best;
}

// Ground-truth lane follower: PD on the lane pose, open-loop maneuvers
// through intersections, optional steering perturbation bursts.
class LaneExpert final : public sim::Policy {
 public:
  LaneExpert(const sim::TrackMap& map, ExpertConfig cfg) : cfg_(std::move(cfg)), table_(cfg_.table()) {
    cfg_.gains.validate();
    cfg_.perturb.validate();
    table_.check_covers(map);
  }

  void reset(std::uint64_t episode_seed) override {
    seed_ = episode_seed;
    tile_.reset();
    maneuver_ = nullptr;
    step_ = 0;
    visits_ = 0;
    burst_left_ = 0;
    offset_ = 0.0;
  }

  sim::Decision act(const sim::StepContext& ctx) override {
    const auto& pose = ctx.state.pose;
    const auto t = ctx.map.tile_at(pose.position());
    const std::uint64_t k = step_++;
    if (!t || !ctx.map.tile(*t).drivable()) return {};
    if (!tile_ || !(*tile_ == *t)) enter(ctx, *t);
    if (maneuver_) {
      if (auto a = maneuver_action(ctx.state.t - entered_at_, *maneuver_)) return {*a, false};
      maneuver_ = nullptr;
    }
    const auto lp = sim::lane_pose(ctx.map, pose);
    if (!lp) return {};
    double omega = steer_command(*lp, cfg_.gains);
    bool perturbed = false;
    if (cfg_.perturb.rate > 0) {
      if (burst_left_ == 0 && uniform_at(seed_, kPerturbStream, 2 * k) < cfg_.perturb.rate * ctx.dt) {
        burst_left_ = std::max<long>(1, std::lround(cfg_.perturb.burst / ctx.dt));
        offset_ = cfg_.perturb.magnitude * (2 * uniform_at(seed_, kPerturbStream, 2 * k + 1) - 1);
      }
      if (burst_left_ > 0) {
        --burst_left_;
        omega += offset_ / cfg_.gains.steer_scale;
        perturbed = true;
      }
    }
    return {steer_to_action(omega, cfg_.gains), perturbed};
  }

  const ExpertConfig& config() const { return cfg_; }
  const ManeuverTable& table() const { return table_; }

 private:
  static constexpr std::uint64_t kPerturbStream = stream_id("perturb");
  static constexpr std::uint64_t kRouteStream = stream_id("route");

  void enter(const sim::StepContext& ctx, sim::TileIndex t) {
    tile_ = t;
    entered_at_ = ctx.state.t;
    maneuver_ = nullptr;
    const sim::Tile& tile = ctx.map.tile(t);
    if (!tile.is_intersection()) return;
    const sim::Edge entry = entry_edge(tile, ctx.state.pose.theta);
    std::vector<sim::Edge> exits;
    for (const auto& r : ctx.map.routes(t))
      if (r.entry == entry) exits.push_back(r.exit);
    if (exits.empty()) return;
    std::optional<sim::Edge> chosen;
    if (cfg_.routes != RouteChoice::Random) {
      const Turn want = cfg_.routes == RouteChoice::Left    ? Turn::Left
                        : cfg_.routes == RouteChoice::Right ? Turn::Right
                                                            : Turn::Straight;
      for (auto e : exits)
        if (route_turn(entry, e) == want) chosen = e;
    }
    if (!chosen) {
      const double u = uniform_at(seed_, kRouteStream, visits_);
      chosen = exits[std::min(exits.size() - 1, static_cast<std::size_t>(u * exits.size()))];
    }
    ++visits_;
    maneuver_ = table_.find(entry, *chosen);
  }

  ExpertConfig cfg_;
  ManeuverTable table_;
  std::uint64_t seed_ = 0;
  std::optional<sim::TileIndex> tile_;
  double entered_at_ = 0.0;
  const Maneuver* maneuver_ = nullptr;
  std::uint64_t step_ = 0;
  std::uint64_t visits_ = 0;
  long burst_left_ = 0;
  double offset_ = 0.0;
};

// Pose on a lane centerline, s meters from its start, heading along it.
inline sim::Pose pose_on_lane(const sim::LaneSegment& lane, double s) {
  const auto p = lane.point_at(s);
  return {p.x, p.y, lane.heading_at(s)};
}

// Fixed calibration start: middle of the first straight tile in row-major
// order, on its first lane.
inline sim::Pose default_start(const sim::TrackMap& map) {
  for (const auto& t : map.drivable_tiles()) {
    const auto kind = map.tile(t).kind;
    if (kind != sim::TileKind::StraightEW && kind != sim::TileKind::StraightNS) continue;
    const auto& lane = map.lanes(t).front();
    return pose_on_lane(lane, lane.length() / 2);
  }
  fail(ErrorKind::InvalidArgument, "map " + map.name() + " has no straight tile to start from");
}

struct DriveScore {
  double tiles = 0.0;
  double mean_abs_d = 0.0;
  bool infraction = false;
  double survival_s = 0.0;
};

inline DriveScore score_drive(const sim::TrackMap& map, sim::Policy& policy, const sim::Pose& start, double limit,
                              std::uint64_t seed = 0) {
  policy.reset(seed);
  double sum_d = 0.0;
  long n = 0;
  sim::RolloutOptions opt;
  opt.hook = [&](const sim::RobotState& s, const sim::Decision&, int) {
    if (auto lp = sim::lane_pose(map, s.pose)) {
      sum_d += std::abs(lp->d);
      ++n;
    }
    return true;
  };
  const auto r = sim::rollout(map, policy, start, limit, opt);
  return {r.tiles(), n ? sum_d / n : 0.0, r.infraction, r.final_state.t};
}

struct GainGrid {
  std::vector<double> kp{2, 4, 8, 16};
  std::vector<double> kd{0.5, 1, 2, 4};
};

struct GridPoint {
  double kp = 0.0;
  double kd = 0.0;
  DriveScore score;
};

struct GainCalibration {
  PDGains gains;
  std::vector<GridPoint> points;
  std::size_t best = 0;
};

inline constexpr double kTileTieTolerance = 1e-6;

// Exhaustive grid search: most tiles before infraction on a fixed rollout,
// ties to the lower mean |d|.
inline GainCalibration calibrate_gains(const sim::TrackMap& map, const GainGrid& grid, const ExpertConfig& base = {},
                                       double limit = 60.0, std::optional<sim::Pose> start = std::nullopt) {
  require(!grid.kp.empty() && !grid.kd.empty(), ErrorKind::InvalidArgument, "empty gain grid");
  const sim::Pose from = start ? *start : default_start(map);
  GainCalibration out;
  for (double kp : grid.kp)
    for (double kd : grid.kd) {
      ExpertConfig cfg = base;
      cfg.gains.kp = kp;
      cfg.gains.kd = kd;
      cfg.perturb.rate = 0.0;
      LaneExpert ex(map, cfg);
      out.points.push_back({kp, kd, score_drive(map, ex, from, limit)});
    }
  bool all_crashed = true;
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    const auto& s = out.points[i].score;
    const auto& b = out.points[out.best].score;
    all_crashed = all_crashed && s.infraction;
    if (s.tiles > b.tiles + kTileTieTolerance ||
        (std::abs(s.tiles - b.tiles) <= kTileTieTolerance && s.mean_abs_d < b.mean_abs_d))
      out.best = i;
  }
  if (all_crashed) {
    std::ostringstream msg;
    msg << "every grid point ends in an infraction:";
    for (const auto& p : out.points)
      msg << " (kp=" << p.kp << ", kd=" << p.kd << ": " << p.score.tiles << " tiles, " << p.score.survival_s << " s)";
    fail(ErrorKind::Runtime, msg.str());
  }
  out.gains = base.gains;
  out.gains.kp = out.points[out.best].kp;
  out.gains.kd = out.points[out.best].kd;
  return out;
}

struct RouteExit {
  sim::TileIndex tile;
  sim::Edge entry = sim::Edge::N;
  sim::Edge exit = sim::Edge::N;
  bool exited = false;  // left the intersection through the intended edge
  double d = NAN;       // offset from the exit lane centerline
  double phi = NAN;
};

// Drives every route of one relative turn through every intersection of the
// map, starting on the approaching lane, and records where the robot leaves
// the intersection relative to the exit lane.
inline std::vector<RouteExit> measure_turn(const sim::TrackMap& map, const ExpertConfig& cfg, Turn turn) {
  std::vector<RouteExit> out;
  ExpertConfig c = cfg;
  c.perturb.rate = 0.0;
  c.routes = turn == Turn::Left ? RouteChoice::Left : turn == Turn::Right ? RouteChoice::Right : RouteChoice::Straight;
  for (const auto& t : map.drivable_tiles()) {
    if (!map.tile(t).is_intersection()) continue;
    for (const auto& r : map.routes(t)) {
      if (route_turn(r.entry, r.exit) != turn) continue;
      const auto from = sim::TrackMap::neighbor(t, r.entry);
      const auto to = sim::TrackMap::neighbor(t, r.exit);
      if (!map.in_grid(from) || !map.in_grid(to) || map.tile(from).is_intersection() ||
          map.tile(to).is_intersection())
        continue;
      const sim::LaneSegment* lane_in = nullptr;
      for (const auto& l : map.routes(from))
        if (l.exit == sim::opposite(r.entry)) lane_in = &l;
      const sim::LaneSegment* lane_out = nullptr;
      for (const auto& l : map.routes(to))
        if (l.entry == sim::opposite(r.exit)) lane_out = &l;
      if (!lane_in || !lane_out) continue;
      LaneExpert ex(map, c);
      ex.reset(0);
      bool inside = false;
      sim::RolloutOptions opt;
      opt.dt = c.dt;
      opt.drive = c.drive;
      opt.hook = [&](const sim::RobotState& s, const sim::Decision&, int) {
        const auto at = map.tile_at(s.pose.position());
        const bool in_t = at && *at == t;
        if (in_t) inside = true;
        return !(inside && !in_t);
      };
      const auto res = sim::rollout(map, ex, pose_on_lane(*lane_in, lane_in->length() / 2), 10.0, opt);
      RouteExit e{t, r.entry, r.exit};
      const auto at = map.tile_at(res.final_state.pose.position());
      e.exited = inside && at && *at == to;
      if (e.exited) {
        const auto proj = lane_out->project(res.final_state.pose.position());
        e.d = proj.offset;
        e.phi = sim::wrap_angle(res.final_state.pose.theta - proj.heading);
      }
      out.push_back(e);
    }
  }
  return out;
}

inline double exit_cost(const std::vector<RouteExit>& exits) {
  double worst = 0.0;
  for (const auto& e : exits) {
    if (!e.exited) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, std::abs(e.d) + 0.05 * std::abs(e.phi));
  }
  return worst;
}

struct ManeuverCalibration {
  TurnShapes shapes;
  std::vector<RouteExit> exits;  // measured with the chosen shapes
};

// Local search over the lead-in and arc durations of each turn around the
// geometric seed, minimizing the worst exit error over all routes.
inline ManeuverCalibration calibrate_maneuvers(const sim::TrackMap& map, const ExpertConfig& base) {
  bool any = false;
  for (const auto& t : map.drivable_tiles()) any = any || map.tile(t).is_intersection();
  require(any, ErrorKind::InvalidArgument, "map " + map.name() + " has no intersection to calibrate on");
  ManeuverCalibration out;
  out.shapes = seed_shapes(base.gains, base.dt, base.drive);
  for (Turn turn : {Turn::Left, Turn::Right}) {
    const TurnShape seed = out.shapes[turn];
    TurnShape best = seed;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int lead = 0; lead <= 4; ++lead)
      for (int da : {0, -1, 1, -2, 2}) {
        const TurnShape cand{lead, seed.arc_steps + da};
        if (cand.arc_steps < 1) continue;
        if (!maneuver_feasible(make_turn_maneuver(turn, cand, base.gains, base.dt, base.drive))) continue;
        ExpertConfig cfg = base;
        cfg.shapes = out.shapes;
        cfg.shapes[turn] = cand;
        const double cost = exit_cost(measure_turn(map, cfg, turn));
        if (cost < best_cost) {
          best_cost = cost;
          best = cand;
        }
      }
    out.shapes[turn] = best;
  }
  ExpertConfig cfg = base;
  cfg.shapes = out.shapes;
  for (Turn turn : {Turn::Straight, Turn::Left, Turn::Right}) {
    auto e = measure_turn(map, cfg, turn);
    out.exits.insert(out.exits.end(), e.begin(), e.end());
  }
  return out;
}

}  // namespace laneil::expert
