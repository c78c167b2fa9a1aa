#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "laneil/core/error.hpp"
#include "laneil/expert/pd.hpp"
#include "laneil/sim/track_map.hpp"

namespace laneil::expert {

enum class Turn { Straight, Left, Right };

inline const char* turn_name(Turn t) {
  switch (t) {
    case Turn::Straight: return "straight";
    case Turn::Left: return "left";
    case Turn::Right: return "right";
  }
  return "?";
}

inline Turn route_turn(sim::Edge entry, sim::Edge exit) {
  if (exit == sim::opposite(entry)) return Turn::Straight;
  const sim::Vec2 in = sim::edge_dir(sim::opposite(entry));
  return in.cross(sim::edge_dir(exit)) > 0 ? Turn::Left : Turn::Right;
}

struct ManeuverSegment {
  double duration = 0.0;  // seconds
  sim::Action action;

  friend bool operator==(const ManeuverSegment&, const ManeuverSegment&) = default;
};

using Maneuver = std::vector<ManeuverSegment>;

inline double total_duration(const Maneuver& m) {
  double t = 0.0;
  for (const auto& s : m) t += s.duration;
  return t;
}

// Action of the segment active at `elapsed` seconds into the maneuver;
// nullopt once the table is exhausted and PD control should take over.
inline std::optional<sim::Action> maneuver_action(double elapsed, const Maneuver& m) {
  double end = 0.0;
  for (const auto& s : m) {
    end += s.duration;
    if (elapsed < end - 1e-9) return s.action;
  }
  return std::nullopt;
}

// Open-loop timing of one relative turn: a straight lead-in followed by a
// constant-curvature quarter turn, both in whole control steps.
struct TurnShape {
  int lead_steps = 0;
  int arc_steps = 1;

  friend bool operator==(const TurnShape&, const TurnShape&) = default;
};

inline double turn_radius(Turn t) {
  return t == Turn::Left ? sim::kTileSize / 2 + sim::kLaneOffset : sim::kTileSize / 2 - sim::kLaneOffset;
}

// Whole-step arc duration closest to driving the quarter arc at v_nominal.
inline int seed_arc_steps(Turn t, const PDGains& g, double dt, const sim::DiffDrive& dd = {}) {
  const double length = turn_radius(t) * sim::kPi / 2;
  return std::max(1, static_cast<int>(std::lround(length / (g.v_nominal * dd.max_speed()) / dt)));
}

// Builds the segment list for a turn. The arc action is derived from its
// duration so that the heading always changes by exactly a quarter turn.
inline Maneuver make_turn_maneuver(Turn t, TurnShape shape, const PDGains& g, double dt, const sim::DiffDrive& dd = {}) {
  Maneuver m;
  const sim::Action cruise{g.v_nominal, g.v_nominal};
  if (t == Turn::Straight) {
    const int steps = static_cast<int>(std::ceil(sim::kTileSize / (g.v_nominal * dd.max_speed()) / dt));
    m.push_back({(shape.lead_steps + steps) * dt, cruise});
    return m;
  }
  if (shape.lead_steps > 0) m.push_back({shape.lead_steps * dt, cruise});
  const double yaw = (sim::kPi / 2) / (shape.arc_steps * dt);
  const double a = yaw * turn_radius(t) / dd.max_speed();
  const double delta = yaw * dd.baseline / (2 * dd.max_speed());
  const sim::Action arc = t == Turn::Left ? sim::Action{a - delta, a + delta} : sim::Action{a + delta, a - delta};
  m.push_back({shape.arc_steps * dt, arc});
  return m;
}

inline bool maneuver_feasible(const Maneuver& m) {
  for (const auto& s : m)
    if (s.duration <= 0 || std::abs(s.action.v_left) > 1 || std::abs(s.action.v_right) > 1) return false;
  return !m.empty();
}

// (entry edge, exit edge) -> timed action sequence.
class ManeuverTable {
 public:
  using Key = std::pair<sim::Edge, sim::Edge>;

  void set(sim::Edge entry, sim::Edge exit, Maneuver m) {
    require(maneuver_feasible(m), ErrorKind::Config,
            std::string("maneuver ") + sim::edge_name(entry) + "->" + sim::edge_name(exit) +
                " needs positive durations and actions within [-1, 1]");
    entries_[{entry, exit}] = std::move(m);
  }

  const Maneuver* find(sim::Edge entry, sim::Edge exit) const {
    auto it = entries_.find({entry, exit});
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::map<Key, Maneuver>& entries() const { return entries_; }

  // Every legal route through every intersection of the map must be covered.
  void check_covers(const sim::TrackMap& map) const {
    for (const auto& t : map.drivable_tiles()) {
      if (!map.tile(t).is_intersection()) continue;
      for (const auto& r : map.routes(t))
        require(find(r.entry, r.exit) != nullptr, ErrorKind::Config,
                std::string("no maneuver for route ") + sim::edge_name(r.entry) + "->" + sim::edge_name(r.exit) +
                    " at " + sim::cell_name(t));
    }
  }

  friend bool operator==(const ManeuverTable&, const ManeuverTable&) = default;

 private:
  std::map<Key, Maneuver> entries_;
};

struct TurnShapes {
  TurnShape straight{0, 1};
  TurnShape left;
  TurnShape right;

  TurnShape& operator[](Turn t) { return t == Turn::Left ? left : t == Turn::Right ? right : straight; }
  const TurnShape& operator[](Turn t) const { return t == Turn::Left ? left : t == Turn::Right ? right : straight; }
};

inline TurnShapes seed_shapes(const PDGains& g, double dt, const sim::DiffDrive& dd = {}) {
  TurnShapes s;
  s.left = {0, seed_arc_steps(Turn::Left, g, dt, dd)};
  s.right = {0, seed_arc_steps(Turn::Right, g, dt, dd)};
  return s;
}

// Table holding all twelve non-U-turn routes, built from per-turn shapes.
inline ManeuverTable build_table(const TurnShapes& shapes, const PDGains& g, double dt, const sim::DiffDrive& dd = {}) {
  ManeuverTable table;
  for (auto entry : sim::kAllEdges)
    for (auto exit : sim::kAllEdges) {
      if (exit == entry) continue;
      const Turn t = route_turn(entry, exit);
      table.set(entry, exit, make_turn_maneuver(t, shapes[t], g, dt, dd));
    }
  return table;
}

}  // namespace laneil::expert
