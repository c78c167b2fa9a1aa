#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "laneil/core/error.hpp"
#include "laneil/sim/geometry.hpp"

namespace laneil::sim {

inline constexpr double kTileSize = 0.6;
inline constexpr double kLaneOffset = 0.15;     // right-lane centerline offset from the tile axis
inline constexpr double kLaneHalfWidth = 0.125;
inline constexpr double kEdgeLineWidth = 0.05;
inline constexpr double kDividerWidth = 0.025;
inline constexpr double kEndpointTolerance = 1e-9;

enum class Edge : std::uint8_t { N = 0, E = 1, S = 2, W = 3 };

inline constexpr std::array<Edge, 4> kAllEdges{Edge::N, Edge::E, Edge::S, Edge::W};

inline Edge opposite(Edge e) { return static_cast<Edge>((static_cast<int>(e) + 2) % 4); }

// Outward unit normal of a tile edge.
inline Vec2 edge_dir(Edge e) {
  switch (e) {
    case Edge::N: return {0.0, 1.0};
    case Edge::E: return {1.0, 0.0};
    case Edge::S: return {0.0, -1.0};
    case Edge::W: return {-1.0, 0.0};
  }
  return {};
}

inline double edge_heading(Edge e) {
  switch (e) {
    case Edge::N: return kPi / 2;
    case Edge::E: return 0.0;
    case Edge::S: return -kPi / 2;
    case Edge::W: return kPi;
  }
  return 0.0;
}

inline char edge_name(Edge e) { return "NESW"[static_cast<int>(e)]; }

inline std::optional<Edge> parse_edge(std::string_view s) {
  if (s == "N") return Edge::N;
  if (s == "E") return Edge::E;
  if (s == "S") return Edge::S;
  if (s == "W") return Edge::W;
  return std::nullopt;
}

enum class TileKind : std::uint8_t {
  Floor,
  StraightNS,
  StraightEW,
  CurveNE,
  CurveNW,
  CurveSE,
  CurveSW,
  Intersection3,
  Intersection4,
};

struct Tile {
  TileKind kind = TileKind::Floor;
  Edge closed = Edge::N;  // the missing arm of an Intersection3

  bool drivable() const { return kind != TileKind::Floor; }
  bool is_intersection() const { return kind == TileKind::Intersection3 || kind == TileKind::Intersection4; }

  // Bit i set when edge i is open.
  std::uint8_t open_mask() const {
    auto bit = [](Edge e) { return static_cast<std::uint8_t>(1u << static_cast<int>(e)); };
    switch (kind) {
      case TileKind::Floor: return 0;
      case TileKind::StraightNS: return bit(Edge::N) | bit(Edge::S);
      case TileKind::StraightEW: return bit(Edge::E) | bit(Edge::W);
      case TileKind::CurveNE: return bit(Edge::N) | bit(Edge::E);
      case TileKind::CurveNW: return bit(Edge::N) | bit(Edge::W);
      case TileKind::CurveSE: return bit(Edge::S) | bit(Edge::E);
      case TileKind::CurveSW: return bit(Edge::S) | bit(Edge::W);
      case TileKind::Intersection3: return static_cast<std::uint8_t>(0xF & ~bit(closed));
      case TileKind::Intersection4: return 0xF;
    }
    return 0;
  }

  bool open(Edge e) const { return (open_mask() >> static_cast<int>(e)) & 1u; }
};

// Map alphabet, one character per tile:
//   .  floor            -  straight east-west   |  straight north-south
//   L  curve N-E        J  curve N-W            F  curve S-E         7  curve S-W
//   +  4-way intersection
//   ^ v < >  3-way intersection pointing at its odd arm:
//            ^ open N,E,W   v open E,S,W   < open N,S,W   > open N,E,S
inline std::optional<Tile> tile_from_code(char c) {
  switch (c) {
    case '.': return Tile{TileKind::Floor};
    case '-': return Tile{TileKind::StraightEW};
    case '|': return Tile{TileKind::StraightNS};
    case 'L': return Tile{TileKind::CurveNE};
    case 'J': return Tile{TileKind::CurveNW};
    case 'F': return Tile{TileKind::CurveSE};
    case '7': return Tile{TileKind::CurveSW};
    case '+': return Tile{TileKind::Intersection4};
    case '^': return Tile{TileKind::Intersection3, Edge::S};
    case 'v': return Tile{TileKind::Intersection3, Edge::N};
    case '<': return Tile{TileKind::Intersection3, Edge::E};
    case '>': return Tile{TileKind::Intersection3, Edge::W};
    default: return std::nullopt;
  }
}

inline char tile_code(const Tile& t) {
  switch (t.kind) {
    case TileKind::Floor: return '.';
    case TileKind::StraightEW: return '-';
    case TileKind::StraightNS: return '|';
    case TileKind::CurveNE: return 'L';
    case TileKind::CurveNW: return 'J';
    case TileKind::CurveSE: return 'F';
    case TileKind::CurveSW: return '7';
    case TileKind::Intersection4: return '+';
    case TileKind::Intersection3:
      switch (t.closed) {
        case Edge::S: return '^';
        case Edge::N: return 'v';
        case Edge::E: return '<';
        case Edge::W: return '>';
      }
  }
  return '?';
}

struct TileIndex {
  int row = 0;
  int col = 0;
  friend bool operator==(const TileIndex&, const TileIndex&) = default;
};

// A directed right-lane centerline piece crossing one tile: a straight segment
// or a quarter arc around a tile corner.
struct LaneSegment {
  TileIndex tile;
  Edge entry = Edge::W;  // edge the lane enters through
  Edge exit = Edge::E;   // edge the lane leaves through
  bool arc = false;
  Vec2 start;
  Vec2 end;
  Vec2 center;             // arc only
  double radius = 0.0;     // arc only
  double start_angle = 0;  // arc only, polar angle of start around center
  double turn = 0.0;       // +1 counterclockwise (left turn), -1 clockwise; 0 for straight

  double length() const { return arc ? radius * kPi / 2 : (end - start).norm(); }

  Vec2 point_at(double s) const {
    if (!arc) return start + unit(heading_at(0)) * s;
    const double a = start_angle + turn * s / radius;
    return center + unit(a) * radius;
  }

  double heading_at(double s) const {
    if (!arc) return std::atan2(end.y - start.y, end.x - start.x);
    return wrap_angle(start_angle + turn * s / radius + turn * kPi / 2);
  }

  struct Projection {
    double s;        // arc length of the nearest point
    Vec2 point;
    double heading;  // tangent direction at the nearest point
    double offset;   // signed lateral offset, positive to the left of travel
  };

  Projection project(Vec2 p) const {
    double s = 0.0;
    if (!arc) {
      const Vec2 u = unit(heading_at(0));
      s = std::clamp((p - start).dot(u), 0.0, length());
    } else {
      const Vec2 rel = p - center;
      double delta = wrap_angle(std::atan2(rel.y, rel.x) - start_angle) * turn;
      // Points behind the start (angularly) clamp to whichever end is nearer.
      if (delta < -3 * kPi / 4) delta += 2 * kPi;
      s = std::clamp(delta, 0.0, kPi / 2) * radius;
    }
    const Vec2 q = point_at(s);
    const double h = heading_at(s);
    return {s, q, h, unit(h).cross(p - q)};
  }
};

inline LaneSegment make_lane(TileIndex tile, Vec2 tile_center, Edge entry, Edge exit) {
  LaneSegment seg;
  seg.tile = tile;
  seg.entry = entry;
  seg.exit = exit;
  const double half = kTileSize / 2;
  const Vec2 h_in = edge_dir(opposite(entry));
  const Vec2 h_out = edge_dir(exit);
  const Vec2 right_in{h_in.y, -h_in.x};
  const Vec2 right_out{h_out.y, -h_out.x};
  seg.start = tile_center + edge_dir(entry) * half + right_in * kLaneOffset;
  seg.end = tile_center + edge_dir(exit) * half + right_out * kLaneOffset;
  if (exit == opposite(entry)) return seg;
  seg.arc = true;
  seg.center = tile_center + (edge_dir(entry) + edge_dir(exit)) * half;
  seg.radius = (seg.start - seg.center).norm();
  seg.start_angle = std::atan2(seg.start.y - seg.center.y, seg.start.x - seg.center.x);
  seg.turn = h_in.cross(h_out) > 0 ? 1.0 : -1.0;
  return seg;
}

// Tile grid with stitched right-lane centerlines. Row 0 is the northern row;
// tile (r, c) covers x in [c*s, (c+1)*s] and y in [(rows-1-r)*s, (rows-r)*s].
class TrackMap {
 public:
  TrackMap() = default;

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double tile_size() const { return kTileSize; }
  const std::string& name() const { return name_; }

  bool in_grid(TileIndex t) const { return t.row >= 0 && t.row < rows_ && t.col >= 0 && t.col < cols_; }
  const Tile& tile(TileIndex t) const { return grid_[index(t)]; }

  Vec2 tile_center(TileIndex t) const {
    return {(t.col + 0.5) * kTileSize, (rows_ - 1 - t.row + 0.5) * kTileSize};
  }

  std::optional<TileIndex> tile_at(Vec2 p) const {
    if (!(p.x >= 0.0 && p.y >= 0.0)) return std::nullopt;
    const int c = static_cast<int>(std::floor(p.x / kTileSize));
    const int r = rows_ - 1 - static_cast<int>(std::floor(p.y / kTileSize));
    TileIndex t{r, c};
    if (!in_grid(t)) return std::nullopt;
    return t;
  }

  bool drivable_at(Vec2 p) const {
    auto t = tile_at(p);
    return t && tile(*t).drivable();
  }

  static TileIndex neighbor(TileIndex t, Edge e) {
    switch (e) {
      case Edge::N: return {t.row - 1, t.col};
      case Edge::S: return {t.row + 1, t.col};
      case Edge::E: return {t.row, t.col + 1};
      case Edge::W: return {t.row, t.col - 1};
    }
    return t;
  }

  // Travel lanes used for lane-pose queries. Intersections expose straight
  // reference lanes along both axes; their turning routes live in routes().
  const std::vector<LaneSegment>& lanes(TileIndex t) const { return lanes_[index(t)]; }
  // Every legal (entry, exit) path across a tile, U-turns excluded.
  const std::vector<LaneSegment>& routes(TileIndex t) const { return routes_[index(t)]; }

  const LaneSegment* route(TileIndex t, Edge entry, Edge exit) const {
    for (const auto& r : routes(t))
      if (r.entry == entry && r.exit == exit) return &r;
    return nullptr;
  }

  std::vector<TileIndex> drivable_tiles() const {
    std::vector<TileIndex> out;
    for (int r = 0; r < rows_; ++r)
      for (int c = 0; c < cols_; ++c)
        if (tile({r, c}).drivable()) out.push_back({r, c});
    return out;
  }

  std::string to_text() const {
    std::string s;
    for (int r = 0; r < rows_; ++r) {
      for (int c = 0; c < cols_; ++c) s += tile_code(tile({r, c}));
      s += '\n';
    }
    return s;
  }

  friend TrackMap build_map(std::string_view spec, std::string name);

 private:
  std::size_t index(TileIndex t) const { return static_cast<std::size_t>(t.row) * cols_ + t.col; }

  std::string name_;
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Tile> grid_;
  std::vector<std::vector<LaneSegment>> lanes_;
  std::vector<std::vector<LaneSegment>> routes_;
};

inline std::string cell_name(TileIndex t) {
  return "(" + std::to_string(t.row) + "," + std::to_string(t.col) + ")";
}

// Parses a text grid (one character per tile, rows separated by newlines),
// validates that every open lane end meets a matching open edge, and builds
// the centerline geometry.
inline TrackMap build_map(std::string_view spec, std::string name = "custom") {
  std::vector<std::string> lines;
  std::string current;
  for (char ch : spec) {
    if (ch == '\r') continue;
    if (ch == '\n') {
      lines.push_back(current);
      current.clear();
    } else {
      current += ch;
    }
  }
  if (!current.empty()) lines.push_back(current);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  require(!lines.empty(), ErrorKind::InvalidArgument, "map spec is empty");

  TrackMap m;
  m.name_ = std::move(name);
  m.rows_ = static_cast<int>(lines.size());
  m.cols_ = static_cast<int>(lines.front().size());
  require(m.cols_ > 0, ErrorKind::InvalidArgument, "map spec has an empty first row");
  for (int r = 0; r < m.rows_; ++r) {
    require(static_cast<int>(lines[r].size()) == m.cols_, ErrorKind::InvalidArgument,
            "map row " + std::to_string(r) + " has length " + std::to_string(lines[r].size()) + ", expected " +
                std::to_string(m.cols_));
    for (int c = 0; c < m.cols_; ++c) {
      auto t = tile_from_code(lines[r][c]);
      require(t.has_value(), ErrorKind::InvalidArgument,
              std::string("unknown tile code '") + lines[r][c] + "' at " + cell_name({r, c}));
      m.grid_.push_back(*t);
    }
  }

  for (int r = 0; r < m.rows_; ++r) {
    for (int c = 0; c < m.cols_; ++c) {
      const TileIndex t{r, c};
      const Tile& tile = m.tile(t);
      for (Edge e : kAllEdges) {
        if (!tile.open(e)) continue;
        const TileIndex n = TrackMap::neighbor(t, e);
        const bool ok = m.in_grid(n) && m.tile(n).open(opposite(e));
        require(ok, ErrorKind::InvalidArgument, "dangling road at " + cell_name(t));
      }
    }
  }

  m.lanes_.resize(m.grid_.size());
  m.routes_.resize(m.grid_.size());
  for (int r = 0; r < m.rows_; ++r) {
    for (int c = 0; c < m.cols_; ++c) {
      const TileIndex t{r, c};
      const Tile& tile = m.tile(t);
      if (!tile.drivable()) continue;
      const Vec2 center = m.tile_center(t);
      auto& routes = m.routes_[m.index(t)];
      for (Edge in : kAllEdges) {
        if (!tile.open(in)) continue;
        for (Edge out : kAllEdges) {
          if (out == in || !tile.open(out)) continue;
          routes.push_back(make_lane(t, center, in, out));
        }
      }
      auto& lanes = m.lanes_[m.index(t)];
      if (tile.is_intersection()) {
        for (Edge in : kAllEdges) lanes.push_back(make_lane(t, center, in, opposite(in)));
      } else {
        lanes = routes;
      }
    }
  }
  return m;
}

inline TrackMap load_map_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Config, "cannot open map file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return build_map(ss.str(), path);
}

namespace presets {

// Rectangular ring, no intersections.
inline constexpr std::string_view kLoop =
    "F---7\n"
    "|...|\n"
    "|...|\n"
    "L---J\n";

// Figure eight whose two rings share a 4-way intersection.
inline constexpr std::string_view kCross =
    "F-7..\n"
    "|.|..\n"
    "L-+-7\n"
    "..|.|\n"
    "..L-J\n";

// Ring with an inward step: left and right turns within one lap.
inline constexpr std::string_view kHeldout =
    "F-7..\n"
    "|.L-7\n"
    "|...|\n"
    "L---J\n";

}  // namespace presets

inline std::optional<std::string_view> preset_spec(std::string_view name) {
  if (name == "LOOP") return presets::kLoop;
  if (name == "CROSS") return presets::kCross;
  if (name == "HELDOUT") return presets::kHeldout;
  return std::nullopt;
}

// Resolves a preset name or a map file path.
inline TrackMap resolve_map(const std::string& name_or_path) {
  if (auto spec = preset_spec(name_or_path)) return build_map(*spec, name_or_path);
  return load_map_file(name_or_path);
}

// Follows lanes tile to tile from a starting lane on an intersection-free
// loop and returns the visited segments, stopping when the start recurs.
inline std::vector<LaneSegment> trace_loop(const TrackMap& map, const LaneSegment& first, int max_segments = 10000) {
  std::vector<LaneSegment> out{first};
  LaneSegment cur = first;
  for (int i = 0; i < max_segments; ++i) {
    const TileIndex next = TrackMap::neighbor(cur.tile, cur.exit);
    require(map.in_grid(next) && map.tile(next).drivable(), ErrorKind::InvalidArgument,
            "lane leaves the road at " + cell_name(cur.tile));
    const Edge entry = opposite(cur.exit);
    const LaneSegment* nxt = nullptr;
    for (const auto& r : map.routes(next)) {
      if (r.entry != entry) continue;
      if (map.tile(next).is_intersection() && r.exit != opposite(entry)) continue;
      nxt = &r;
      break;
    }
    require(nxt != nullptr, ErrorKind::InvalidArgument, "no continuing lane at " + cell_name(next));
    if (nxt->tile == first.tile && nxt->entry == first.entry && nxt->exit == first.exit) return out;
    out.push_back(*nxt);
    cur = *nxt;
  }
  fail(ErrorKind::InvalidArgument, "lane trace did not close");
}

inline double total_length(const std::vector<LaneSegment>& segs) {
  double s = 0.0;
  for (const auto& seg : segs) s += seg.length();
  return s;
}

}  // namespace laneil::sim
