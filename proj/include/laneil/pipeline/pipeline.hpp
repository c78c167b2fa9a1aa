#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "laneil/config/config.hpp"
#include "laneil/dataset/collect.hpp"
#include "laneil/dataset/imds.hpp"
#include "laneil/dataset/mix.hpp"
#include "laneil/eval/eval.hpp"
#include "laneil/expert/expert.hpp"
#include "laneil/nn/checkpoint.hpp"
#include "laneil/train/train.hpp"

namespace laneil::pipeline {

using config::RunConfig;

// Runs f(0..n-1) on up to `jobs` threads; the first exception is rethrown
// after all workers finish.
template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& f) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      f(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += jobs) run(i);
      });
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---- expert

struct ExpertSetup {
  expert::ExpertConfig cfg;
  std::optional<expert::GainCalibration> gains;            // set when calibrated here
  std::optional<expert::ManeuverCalibration> maneuvers;    // set when calibrated here
};

inline bool has_intersection(const sim::TrackMap& map) {
  for (const auto& t : map.drivable_tiles())
    if (map.tile(t).is_intersection()) return true;
  return false;
}

// Config gains and shapes when given, otherwise the grid search on the
// calibration map and the maneuver search on the maneuver map.
inline ExpertSetup resolve_expert(const RunConfig& c) {
  ExpertSetup out;
  out.cfg = config::base_expert(c);
  if (!c.expert.gains) {
    expert::GainGrid grid = c.expert.grid;
    out.gains = expert::calibrate_gains(sim::resolve_map(c.expert.calibration_map), grid, out.cfg,
                                        c.expert.calibration_limit);
    out.cfg.gains = out.gains->gains;
    if (!c.expert.shapes) out.cfg.shapes = expert::seed_shapes(out.cfg.gains, out.cfg.dt, out.cfg.drive);
  }
  if (!c.expert.shapes) {
    const auto map = sim::resolve_map(c.expert.maneuver_map);
    if (has_intersection(map)) {
      out.maneuvers = expert::calibrate_maneuvers(map, out.cfg);
      out.cfg.shapes = out.maneuvers->shapes;
    }
  }
  return out;
}

inline config::json calibration_json(const ExpertSetup& e) {
  config::json j{{"kp", e.cfg.gains.kp},
                 {"kd", e.cfg.gains.kd},
                 {"v_nominal", e.cfg.gains.v_nominal},
                 {"steer_scale", e.cfg.gains.steer_scale},
                 {"expert", {{"gains", {{"kp", e.cfg.gains.kp}, {"kd", e.cfg.gains.kd}}}, {"shapes", config::shapes_json(e.cfg.shapes)}}}};
  if (e.gains) {
    config::json pts = config::json::array();
    for (const auto& p : e.gains->points)
      pts.push_back({{"kp", p.kp},
                     {"kd", p.kd},
                     {"tiles", p.score.tiles},
                     {"mean_abs_d", p.score.mean_abs_d},
                     {"infraction", p.score.infraction},
                     {"survival_s", p.score.survival_s}});
    j["grid"] = pts;
  }
  if (e.maneuvers) {
    config::json ex = config::json::array();
    for (const auto& r : e.maneuvers->exits)
      ex.push_back({{"tile", sim::cell_name(r.tile)},
                    {"entry", std::string(1, sim::edge_name(r.entry))},
                    {"exit", std::string(1, sim::edge_name(r.exit))},
                    {"exited", r.exited},
                    {"d", r.d},
                    {"phi", r.phi}});
    j["maneuver_exits"] = ex;
  }
  return j;
}

// ---- collection

inline std::string dataset_path(const std::string& dir, const std::string& domain) {
  return (std::filesystem::path(dir) / (domain + ".imds")).string();
}

inline data::Dataset collect_source(const RunConfig& c, const expert::ExpertConfig& ecfg, std::size_t i) {
  const auto& src = c.collect.sources.at(i);
  const auto map = sim::resolve_map(src.map);
  expert::LaneExpert ex(map, ecfg);
  data::CollectOptions opt;
  opt.n_frames = c.collect.frames;
  opt.seed = c.stage_seed("collect", i);
  opt.episode_s = c.collect.episode_s;
  opt.drop_perturbed = c.collect.drop_perturbed;
  opt.dt = c.sim.dt;
  opt.drive = c.sim.drive;
  return data::collect(map, ex, c.domain(src.domain), c.camera, opt);
}

inline std::vector<data::Dataset> collect_all(const RunConfig& c, const expert::ExpertConfig& ecfg, std::size_t jobs = 1) {
  std::vector<data::Dataset> out(c.collect.sources.size());
  parallel_for(out.size(), jobs, [&](std::size_t i) { out[i] = collect_source(c, ecfg, i); });
  return out;
}

// ---- splits and recipes

struct SourceSplit {
  std::string source;
  train::SampleView train;
  train::SampleView val;
};

// Views into `datasets`, which must outlive the result. Source i uses the
// split stream of index i.
inline std::vector<SourceSplit> split_sources(const RunConfig& c, const std::vector<data::Dataset>& datasets) {
  require(datasets.size() == c.collect.sources.size(), ErrorKind::InvalidArgument, "one dataset per source expected");
  std::vector<SourceSplit> out;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto [tr, va] = data::split_indices(datasets[i].size(), c.train.val_fraction, c.stage_seed("split", i));
    SourceSplit s{c.collect.sources[i].domain, {}, {}};
    for (auto k : tr) s.train.push_back(&datasets[i].samples[k]);
    for (auto k : va) s.val.push_back(&datasets[i].samples[k]);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<train::ValSubset> val_subsets(const std::vector<SourceSplit>& splits) {
  std::vector<train::ValSubset> out;
  for (const auto& s : splits) out.push_back({s.source, s.val});
  return out;
}

inline const SourceSplit& find_split(const std::vector<SourceSplit>& splits, const std::string& source) {
  for (const auto& s : splits)
    if (s.source == source) return s;
  fail(ErrorKind::Config, "no collected source " + source);
}

// Equal-proportion mix of the recipe's training parts: k sources times the
// smallest part, drawn and interleaved with the recipe's mix stream.
inline train::SampleView recipe_view(const RunConfig& c, const std::vector<SourceSplit>& splits, std::size_t r) {
  const auto& rec = c.train.recipes.at(r);
  std::vector<const SourceSplit*> parts;
  std::size_t smallest = std::numeric_limits<std::size_t>::max();
  for (const auto& name : rec.sources) {
    parts.push_back(&find_split(splits, name));
    smallest = std::min(smallest, parts.back()->train.size());
  }
  require(smallest > 0, ErrorKind::InvalidArgument, "recipe " + rec.name + " has an empty training source");
  std::vector<data::SourceSize> sizes;
  for (const auto* p : parts) sizes.push_back({p->source, p->train.size()});
  train::SampleView out;
  for (const auto& [src, idx] : data::mix_indices(sizes, parts.size() * smallest, c.stage_seed("mix", r)))
    out.push_back(parts[src]->train[idx]);
  return out;
}

inline train::TrainSettings train_settings(const RunConfig& c) {
  train::TrainSettings s;
  s.epochs = c.train.epochs;
  s.batch = c.train.batch;
  s.adam = c.train.adam;
  s.seed = c.stage_seed("train");
  s.model = c.train.model;
  return s;
}

// ---- closed loop

inline std::vector<eval::Scenario> loop_scenarios(const RunConfig& c, const sim::TrackMap& map, const std::string& domain) {
  std::vector<eval::Scenario> out;
  const auto starts = eval::spread_starts(map, c.eval.scenarios);
  for (std::size_t i = 0; i < starts.size(); ++i)
    out.push_back({domain + "/" + std::to_string(i + 1), &map, c.domain(domain), starts[i], c.eval.time_limit});
  return out;
}

inline eval::PolicyFactory expert_factory(const sim::TrackMap& map, expert::ExpertConfig cfg) {
  cfg.perturb.rate = 0.0;
  return [&map, cfg] { return std::make_unique<expert::LaneExpert>(map, cfg); };
}

inline eval::PolicyFactory network_factory(std::shared_ptr<const nn::Model<float>> model) {
  return [model] { return std::make_unique<eval::NetworkPolicy>(*model); };
}

inline eval::ClosedLoopOptions loop_options(const RunConfig& c) {
  eval::ClosedLoopOptions o;
  o.dt = c.sim.dt;
  o.drive = c.sim.drive;
  o.camera = c.camera;
  return o;
}

}  // namespace laneil::pipeline
