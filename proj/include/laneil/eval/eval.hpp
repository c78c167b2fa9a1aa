#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "laneil/core/rng.hpp"
#include "laneil/nn/model.hpp"
#include "laneil/render/observation.hpp"
#include "laneil/sim/lane_pose.hpp"
#include "laneil/sim/rollout.hpp"
#include "laneil/train/train.hpp"

namespace laneil::eval {

// ---- offline MSE matrix

struct MseMatrix {
  std::vector<std::string> rows;     // training recipe
  std::vector<std::string> sources;  // validation source
  std::vector<std::vector<double>> mse;
  std::vector<double> avg;  // unweighted row mean

  double at(const std::string& row, const std::string& source) const {
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i] == row)
        for (std::size_t j = 0; j < sources.size(); ++j)
          if (sources[j] == source) return mse[i][j];
    fail(ErrorKind::InvalidArgument, "no matrix entry for " + row + " / " + source);
  }
  double avg_of(const std::string& row) const {
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i] == row) return avg[i];
    fail(ErrorKind::InvalidArgument, "no matrix row " + row);
  }
};

inline double row_average(const std::vector<double>& v) {
  require(!v.empty(), ErrorKind::InvalidArgument, "empty matrix row");
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Fills the AVG column from the entries.
inline MseMatrix make_matrix(std::vector<std::string> rows, std::vector<std::string> sources,
                             std::vector<std::vector<double>> mse) {
  require(mse.size() == rows.size(), ErrorKind::ShapeMismatch, "matrix row count mismatch");
  MseMatrix m{std::move(rows), std::move(sources), std::move(mse), {}};
  for (const auto& r : m.mse) {
    require(r.size() == m.sources.size(), ErrorKind::ShapeMismatch, "matrix column count mismatch");
    m.avg.push_back(row_average(r));
  }
  return m;
}

struct NamedModel {
  std::string name;
  nn::Model<float>* model = nullptr;
};

inline MseMatrix offline_matrix(const std::vector<NamedModel>& models, const std::vector<train::ValSubset>& val) {
  require(!val.empty(), ErrorKind::InvalidArgument, "offline matrix needs at least one validation source");
  for (const auto& v : val)
    require(!v.samples.empty(), ErrorKind::InvalidArgument, "empty validation subset for source " + v.source);
  std::vector<std::string> rows, sources;
  for (const auto& v : val) sources.push_back(v.source);
  std::vector<std::vector<double>> mse;
  for (const auto& m : models) {
    rows.push_back(m.name);
    mse.emplace_back();
    for (const auto& v : val) mse.back().push_back(train::eval_mse(*m.model, v.samples));
  }
  return make_matrix(std::move(rows), std::move(sources), std::move(mse));
}

inline nlohmann::json to_json(const MseMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    nlohmann::json r{{"method", m.rows[i]}, {"avg", m.avg[i]}};
    for (std::size_t j = 0; j < m.sources.size(); ++j) r["mse"][m.sources[j]] = m.mse[i][j];
    rows.push_back(r);
  }
  return {{"sources", m.sources}, {"rows", rows}};
}

// Decimal half-up rounding after stripping binary noise below 1e-6 of the
// last digit, so 0.14725 shows as 0.1473 although the double sits just below.
inline double round_half_up(double v, int digits) {
  const double scale = std::pow(10.0, digits);
  const double x = std::round(std::abs(v) * scale * 1e6) / 1e6;
  return std::copysign(std::floor(x + 0.5) / scale, v);
}

inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, round_half_up(v, digits));
  return buf;
}

// Left-aligned first column, right-aligned numbers.
inline std::string format_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& body) {
  std::vector<std::size_t> w(header.size(), 0);
  auto widen = [&](const std::vector<std::string>& r) {
    for (std::size_t j = 0; j < r.size() && j < w.size(); ++j) w[j] = std::max(w[j], r[j].size());
  };
  widen(header);
  for (const auto& r : body) widen(r);
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (j) os << "  ";
      const std::string pad(w[j] - r[j].size(), ' ');
      os << (j == 0 ? r[j] + pad : pad + r[j]);
    }
    os << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto x : w) total += x;
  os << std::string(total + 2 * (w.size() - 1), '-') << '\n';
  for (const auto& r : body) line(r);
  return os.str();
}

inline std::string to_text(const MseMatrix& m, int digits = 4) {
  std::vector<std::string> header{"Method"};
  for (const auto& s : m.sources) header.push_back(s);
  header.push_back("AVG");
  std::vector<std::vector<std::string>> body;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    std::vector<std::string> r{m.rows[i]};
    for (double v : m.mse[i]) r.push_back(format_fixed(v, digits));
    r.push_back(format_fixed(m.avg[i], digits));
    body.push_back(r);
  }
  return format_table(header, body);
}

// ---- closed loop

// Frame -> Eval-mode forward -> clamp. Owns its own model copy, so one
// instance per concurrent rollout.
class NetworkPolicy final : public sim::Policy {
 public:
  explicit NetworkPolicy(nn::Model<float> model) : model_(std::move(model)), x_(input_shape()) {
    const auto& in = model_.config().input;
    require(in == nn::Shape{InputTensor::kChannels, InputTensor::kHeight, InputTensor::kWidth}, ErrorKind::ShapeMismatch,
            "policy model expects input " + nn::to_string(in) + ", frames are 3x32x64");
    require(model_.output_units() == 2, ErrorKind::ShapeMismatch,
            "policy model must have 2 outputs");
  }

  bool needs_frame() const override { return true; }

  sim::Decision act(const sim::StepContext& ctx) override {
    require(ctx.frame != nullptr, ErrorKind::InvalidArgument, "network policy called without a frame");
    std::copy(ctx.frame->data.begin(), ctx.frame->data.end(), x_.data());
    const auto& y = model_.forward(x_, nn::RunMode::Eval);
    return {sim::clamp_action({y[0], y[1]}), false};
  }

  nn::Model<float>& model() { return model_; }

 private:
  static nn::Shape input_shape() { return {1, InputTensor::kChannels, InputTensor::kHeight, InputTensor::kWidth}; }

  nn::Model<float> model_;
  nn::Tensor<float> x_;
};

struct ScenarioResult {
  double tiles = 0;
  double survival_s = 0;
  bool infraction = false;
  std::vector<sim::TraceRow> trace;
};

struct ClosedLoopOptions {
  double dt = sim::kDefaultDt;
  sim::DiffDrive drive;
  render::CameraModel camera;
  std::uint64_t seed = 0;  // frame noise and mounting jitter
  bool keep_trace = false;
};

// Rolls the policy out with frames rendered in the given domain. Stops at the
// first infraction or the time limit. Mounting jitter is drawn once per run,
// as in collection.
inline ScenarioResult closed_loop(sim::Policy& policy, const sim::TrackMap& map, const render::DomainConfig& domain,
                                  const sim::Pose& start, double time_limit, const ClosedLoopOptions& opt = {}) {
  domain.validate();
  const render::CameraModel cam =
      render::jitter_camera(opt.camera, domain.extrinsics_jitter, derive_seed(opt.seed, "episode"));
  InputTensor frame;
  sim::RolloutOptions ro;
  ro.dt = opt.dt;
  ro.drive = opt.drive;
  ro.keep_trace = opt.keep_trace;
  ro.frames = [&](const sim::RobotState& s, int step) {
    frame = render::render_observation(map, s.pose, cam, domain, derive_seed(opt.seed, "frame", step));
    return &frame;
  };
  policy.reset(derive_seed(opt.seed, "policy"));
  auto r = sim::rollout(map, policy, start, time_limit, ro);
  return {r.tiles(), r.final_state.t, r.infraction, std::move(r.trace)};
}

// t, x, y, theta, d, phi, v_left, v_right per step.
inline std::string trace_csv(const std::vector<sim::TraceRow>& trace) {
  std::ostringstream os;
  os.precision(17);
  os << "t,x,y,theta,d,phi,v_left,v_right\n";
  for (const auto& r : trace)
    os << r.t << ',' << r.pose.x << ',' << r.pose.y << ',' << r.pose.theta << ',' << r.d << ',' << r.phi << ','
       << r.action.v_left << ',' << r.action.v_right << '\n';
  return os.str();
}

// Evenly spread starts on lane centerlines of non-intersection tiles, in
// row-major tile order, each in the middle of its lane.
inline std::vector<sim::Pose> spread_starts(const sim::TrackMap& map, std::size_t n) {
  std::vector<const sim::LaneSegment*> lanes;
  for (const auto& t : map.drivable_tiles()) {
    if (map.tile(t).is_intersection()) continue;
    for (const auto& l : map.lanes(t)) lanes.push_back(&l);
  }
  require(!lanes.empty(), ErrorKind::InvalidArgument, "map " + map.name() + " has no lane to start on");
  std::vector<sim::Pose> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto* lane = lanes[i * lanes.size() / n];
    const auto p = lane->point_at(lane->length() / 2);
    out.push_back({p.x, p.y, lane->heading_at(lane->length() / 2)});
  }
  return out;
}

struct Scenario {
  std::string name;
  const sim::TrackMap* map = nullptr;
  render::DomainConfig domain;
  sim::Pose start;
  double time_limit = 15.0;
};

using PolicyFactory = std::function<std::unique_ptr<sim::Policy>()>;

struct NamedPolicy {
  std::string name;
  PolicyFactory make;
};

struct SuiteReport {
  std::vector<std::string> policies;
  std::vector<std::string> scenarios;
  std::vector<std::vector<ScenarioResult>> results;  // [policy][scenario]

  double total_tiles(std::size_t p) const {
    double s = 0;
    for (const auto& r : results.at(p)) s += r.tiles;
    return s;
  }
  double total_tiles(const std::string& policy) const {
    for (std::size_t p = 0; p < policies.size(); ++p)
      if (policies[p] == policy) return total_tiles(p);
    fail(ErrorKind::InvalidArgument, "no policy " + policy + " in report");
  }
};

// Every (policy, scenario) pair with its own policy instance and RNG stream;
// results are assembled by index, so the thread count does not matter.
inline SuiteReport scenario_suite(const std::vector<NamedPolicy>& policies, const std::vector<Scenario>& scenarios,
                                  std::uint64_t seed, std::size_t jobs = 1, bool keep_trace = false,
                                  const ClosedLoopOptions& base = {}) {
  SuiteReport rep;
  for (const auto& p : policies) rep.policies.push_back(p.name);
  for (const auto& s : scenarios) {
    require(s.map != nullptr, ErrorKind::InvalidArgument, "scenario " + s.name + " has no map");
    rep.scenarios.push_back(s.name);
  }
  rep.results.assign(policies.size(), std::vector<ScenarioResult>(scenarios.size()));
  const std::size_t n = policies.size() * scenarios.size();
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t k) {
    const std::size_t p = k / scenarios.size(), s = k % scenarios.size();
    try {
      auto policy = policies[p].make();
      ClosedLoopOptions opt = base;
      opt.seed = derive_seed(seed, "scenario", s);
      opt.keep_trace = keep_trace;
      const auto& sc = scenarios[s];
      rep.results[p][s] = closed_loop(*policy, *sc.map, sc.domain, sc.start, sc.time_limit, opt);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t k = 0; k < n; ++k) work(k);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t k = t; k < n; k += jobs) work(k);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rep;
}

inline nlohmann::json to_json(const SuiteReport& r) {
  nlohmann::json pols = nlohmann::json::array();
  for (std::size_t p = 0; p < r.policies.size(); ++p) {
    nlohmann::json runs = nlohmann::json::array();
    for (std::size_t s = 0; s < r.scenarios.size(); ++s) {
      const auto& x = r.results[p][s];
      runs.push_back({{"scenario", r.scenarios[s]},
                      {"tiles", x.tiles},
                      {"survival_s", x.survival_s},
                      {"infraction", x.infraction}});
    }
    pols.push_back({{"policy", r.policies[p]}, {"runs", runs}, {"total_tiles", r.total_tiles(p)}});
  }
  return {{"scenarios", r.scenarios}, {"policies", pols}};
}

// One row per policy: tiles and time per scenario, then the total.
inline std::string to_text(const SuiteReport& r) {
  std::vector<std::string> header{"Method"};
  for (const auto& s : r.scenarios) {
    header.push_back(s + " tiles");
    header.push_back("time");
  }
  header.push_back("Total");
  std::vector<std::vector<std::string>> body;
  for (std::size_t p = 0; p < r.policies.size(); ++p) {
    std::vector<std::string> row{r.policies[p]};
    for (const auto& x : r.results[p]) {
      row.push_back(format_fixed(x.tiles, 2));
      row.push_back(format_fixed(x.survival_s, 1) + (x.infraction ? "*" : ""));
    }
    row.push_back(format_fixed(r.total_tiles(p), 2));
    body.push_back(row);
  }
  return format_table(header, body) + (r.policies.empty() ? "" : "(* ended by an infraction)\n");
}

}  // namespace laneil::eval
