// laneil: map, calibrate, collect, train, eval-offline, eval-loop, gradcheck, dump-frames
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "laneil/config/config.hpp"
#include "laneil/nn/gradcheck.hpp"
#include "laneil/pipeline/pipeline.hpp"
#include "laneil/render/png.hpp"
#include "laneil/render/renderer.hpp"

namespace fs = std::filesystem;
using namespace laneil;
using nlohmann::json;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Options {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string map;
  std::size_t count = 4;
};

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Runtime, "cannot write " + p.string());
  f << s;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

void log(const std::string& s) { std::cerr << s << std::endl; }

config::RunConfig load_config(const Options& o) {
  if (o.config.empty()) fail(ErrorKind::Config, "--config is required for this command");
  if (!fs::exists(o.config)) fail(ErrorKind::Config, "config file " + o.config + " does not exist");
  auto c = config::load(o.config);
  if (o.seed) c.seed = *o.seed;
  return c;
}

fs::path prepare_out(const Options& o, const config::RunConfig* c) {
  fs::create_directories(o.out);
  if (c) write_json(fs::path(o.out) / "config.json", config::to_json(*c));
  return o.out;
}

std::vector<data::Dataset> load_datasets(const config::RunConfig& c, const std::string& dir) {
  std::vector<data::Dataset> out;
  for (const auto& s : c.collect.sources) {
    const auto path = pipeline::dataset_path(dir, s.domain);
    if (!fs::exists(path)) fail(ErrorKind::Config, "missing dataset " + path + " (run collect first)");
    out.push_back(data::read_imds(path));
  }
  return out;
}

nn::Model<float> load_model(const std::string& path) {
  if (!fs::exists(path)) fail(ErrorKind::Config, "missing checkpoint " + path);
  return nn::load_checkpoint(path).model;
}

std::string dir_or(const std::string& dir, const std::string& fallback) { return dir.empty() ? fallback : dir; }

// ---- commands

int cmd_map(const Options& o) {
  if (o.map.empty()) fail(ErrorKind::Config, "map: give a preset name (LOOP, CROSS, HELDOUT) or a map file");
  sim::TrackMap map = [&] {
    try {
      return sim::resolve_map(o.map);
    } catch (const Error& e) {
      fail(ErrorKind::Config, e.what());
    }
  }();
  const auto out = prepare_out(o, nullptr);
  std::size_t drivable = 0, intersections = 0, lanes = 0;
  for (const auto& t : map.drivable_tiles()) {
    ++drivable;
    if (map.tile(t).is_intersection()) ++intersections;
    lanes += map.lanes(t).size();
  }
  json j{{"name", map.name()},
         {"rows", map.rows()},
         {"cols", map.cols()},
         {"drivable_tiles", drivable},
         {"intersections", intersections},
         {"lane_segments", lanes},
         {"grid", map.to_text()}};
  write_json(out / "map.json", j);
  std::cout << map.to_text() << drivable << " drivable tiles, " << intersections << " intersections, " << lanes
            << " lane segments\n";
  return 0;
}

int cmd_calibrate(const Options& o) {
  auto c = load_config(o);
  const auto out = prepare_out(o, &c);
  c.expert.gains.reset();
  c.expert.shapes.reset();
  const auto setup = pipeline::resolve_expert(c);
  const json j = pipeline::calibration_json(setup);
  write_json(out / "gains.json", j);
  std::cout << "kp " << setup.cfg.gains.kp << "  kd " << setup.cfg.gains.kd << "\n";
  if (setup.gains) {
    const auto& best = setup.gains->points[setup.gains->best].score;
    std::cout << "best grid point: " << best.tiles << " tiles in " << c.expert.calibration_limit << " s on "
              << c.expert.calibration_map << (best.infraction ? " (infraction)" : "") << "\n";
  }
  return 0;
}

int cmd_collect(const Options& o) {
  const auto c = load_config(o);
  const auto out = prepare_out(o, &c);
  const auto setup = pipeline::resolve_expert(c);
  const auto datasets = pipeline::collect_all(c, setup.cfg, o.jobs);
  json files = json::array();
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto& s = c.collect.sources[i];
    const auto path = pipeline::dataset_path(out.string(), s.domain);
    data::write_imds(datasets[i], path);
    files.push_back({{"map", s.map}, {"domain", s.domain}, {"file", path}, {"samples", datasets[i].size()},
                     {"bytes", data::imds::file_size(datasets[i].size())}});
    std::cout << path << ": " << datasets[i].size() << " samples\n";
  }
  write_json(out / "collect.json", {{"sources", files}, {"expert", pipeline::calibration_json(setup)}});
  return 0;
}

json history_json(const train::TrainHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs) epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_mse", e.val_mse}});
  return epochs;
}

int cmd_train(const Options& o) {
  const auto c = load_config(o);
  const auto out = prepare_out(o, &c);
  const auto datasets = load_datasets(c, dir_or(c.train.data_dir, o.out));
  const auto splits = pipeline::split_sources(c, datasets);
  const auto val = pipeline::val_subsets(splits);
  const auto settings = pipeline::train_settings(c);
  json recipes = json::array();
  json timing = json::object();
  std::vector<std::string> names, sources;
  for (const auto& v : val) sources.push_back(v.source);
  std::vector<std::vector<double>> means;
  for (std::size_t r = 0; r < c.train.recipes.size(); ++r) {
    const auto& rec = c.train.recipes[r];
    const auto view = pipeline::recipe_view(c, splits, r);
    log("train " + rec.name + ": " + std::to_string(view.size()) + " samples, " + std::to_string(c.train.seeds) +
        " seeds");
    auto res = train::multi_seed(view, val, settings, c.train.seeds, o.jobs, [&](std::uint64_t seed, const train::EpochRecord& e) {
      log("  " + rec.name + " seed " + std::to_string(seed - settings.seed) + " epoch " + std::to_string(e.epoch) +
          " loss " + eval::format_fixed(e.train_loss, 5) + " val avg " + eval::format_fixed(train::source_average(e.val_mse), 5));
    });
    json runs = json::array();
    for (std::size_t k = 0; k < res.runs.size(); ++k) {
      auto& run = res.runs[k];
      const auto path = out / (rec.name + "_seed" + std::to_string(k) + ".imnn");
      nn::save_checkpoint(path.string(), run.model, &run.adam);
      runs.push_back({{"seed", run.seed}, {"checkpoint", path.string()}, {"history", history_json(run.history)},
                      {"final_val_mse", run.final_val()}, {"final_avg", train::source_average(run.final_val())}});
      timing[rec.name].push_back(run.history.wall_s);
    }
    const auto selected = out / (rec.name + ".imnn");
    nn::save_checkpoint(selected.string(), res.runs[res.best].model, &res.runs[res.best].adam);
    recipes.push_back({{"recipe", rec.name}, {"sources", rec.sources}, {"train_samples", view.size()}, {"runs", runs},
                       {"mean_val_mse", res.mean_val}, {"selected", res.best}, {"selected_checkpoint", selected.string()}});
    names.push_back(rec.name);
    std::vector<double> row;
    for (const auto& s : sources) row.push_back(res.mean_val.at(s));
    means.push_back(row);
  }
  write_json(out / "train.json", {{"config", config::to_json(c)}, {"recipes", recipes}});
  write_json(out / "timing.json", {{"wall_s", timing}});
  const auto table = eval::to_text(eval::make_matrix(names, sources, means));
  write_text(out / "train.txt", "Mean validation MSE across seeds\n" + table);
  std::cout << table;
  return 0;
}

int cmd_eval_offline(const Options& o) {
  const auto c = load_config(o);
  const auto out = prepare_out(o, &c);
  const auto ckdir = dir_or(c.eval.checkpoint_dir, o.out);
  std::vector<nn::Model<float>> models;
  for (const auto& r : c.train.recipes) models.push_back(load_model((fs::path(ckdir) / (r.name + ".imnn")).string()));
  const auto datasets = load_datasets(c, dir_or(c.train.data_dir, o.out));
  const auto splits = pipeline::split_sources(c, datasets);
  const auto val = pipeline::val_subsets(splits);
  std::vector<eval::NamedModel> named;
  for (std::size_t i = 0; i < models.size(); ++i) named.push_back({c.train.recipes[i].name, &models[i]});
  const auto m = eval::offline_matrix(named, val);
  json j{{"selected", eval::to_json(m)}};
  std::string text = "Selected models\n" + eval::to_text(m);
  // per-seed matrices when every per-seed checkpoint is present
  for (std::size_t k = 0; k < c.train.seeds; ++k) {
    std::vector<nn::Model<float>> per;
    for (const auto& r : c.train.recipes) {
      const auto p = fs::path(ckdir) / (r.name + "_seed" + std::to_string(k) + ".imnn");
      if (!fs::exists(p)) break;
      per.push_back(nn::load_checkpoint(p.string()).model);
    }
    if (per.size() != c.train.recipes.size()) break;
    std::vector<eval::NamedModel> pn;
    for (std::size_t i = 0; i < per.size(); ++i) pn.push_back({c.train.recipes[i].name, &per[i]});
    const auto pm = eval::offline_matrix(pn, val);
    j["per_seed"].push_back(eval::to_json(pm));
    text += "\nSeed " + std::to_string(k) + "\n" + eval::to_text(pm);
  }
  write_json(out / "offline.json", j);
  write_text(out / "offline.txt", text);
  std::cout << text;
  return 0;
}

int cmd_eval_loop(const Options& o) {
  const auto c = load_config(o);
  const auto out = prepare_out(o, &c);
  const auto ckdir = dir_or(c.eval.checkpoint_dir, o.out);
  const auto map = sim::resolve_map(c.eval.map);
  std::vector<eval::NamedPolicy> policies;
  std::optional<pipeline::ExpertSetup> setup;
  for (const auto& p : c.eval.policies) {
    if (p == "EXPERT") {
      if (!setup) setup = pipeline::resolve_expert(c);
      policies.push_back({p, pipeline::expert_factory(map, setup->cfg)});
    } else {
      auto model = std::make_shared<const nn::Model<float>>(load_model((fs::path(ckdir) / (p + ".imnn")).string()));
      policies.push_back({p, pipeline::network_factory(model)});
    }
  }
  json domains = json::array();
  std::string text;
  for (std::size_t d = 0; d < c.eval.domains.size(); ++d) {
    const auto& dom = c.eval.domains[d];
    const auto scenarios = pipeline::loop_scenarios(c, map, dom);
    const auto rep = eval::scenario_suite(policies, scenarios, c.stage_seed("eval", d), o.jobs, c.eval.trace,
                                          pipeline::loop_options(c));
    domains.push_back({{"domain", dom}, {"report", eval::to_json(rep)}});
    text += dom + " on " + c.eval.map + ", " + eval::format_fixed(c.eval.time_limit, 0) + " s limit\n" + eval::to_text(rep) + "\n";
    if (c.eval.trace) {
      fs::create_directories(out / "traces");
      for (std::size_t p = 0; p < rep.policies.size(); ++p)
        for (std::size_t s = 0; s < rep.scenarios.size(); ++s)
          write_text(out / "traces" / (rep.policies[p] + "_" + dom + "_" + std::to_string(s + 1) + ".csv"),
                     eval::trace_csv(rep.results[p][s].trace));
    }
  }
  write_json(out / "loop.json", {{"map", c.eval.map}, {"time_limit", c.eval.time_limit}, {"domains", domains}});
  write_text(out / "loop.txt", text);
  std::cout << text;
  return 0;
}

int cmd_gradcheck(const Options& o) {
  const auto out = prepare_out(o, nullptr);
  const std::uint64_t seed = o.seed.value_or(7);
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  json layers = json::array();
  std::cout << "layer               checked   rel64      rel32\n";
  for (const auto& l : nn::check_all_layers(seed)) {
    const bool pass = l.max_rel64 < 1e-6 && l.max_rel32 < 1e-3;
    ok = ok && pass;
    layers.push_back({{"layer", l.name}, {"checked", l.checked}, {"max_rel64", l.max_rel64}, {"max_rel32", l.max_rel32}, {"pass", pass}});
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-18s %8zu  %.2e  %.2e  %s\n", l.name.c_str(), l.checked, l.max_rel64, l.max_rel32,
                  pass ? "ok" : "FAIL");
    std::cout << buf;
  }
  const auto rep = nn::check_default_model(seed + 4);
  json params = json::array();
  std::cout << "\nfull model, batch 4  checked   rel64      rel32      rel32/scale\n";
  for (const auto& p : rep.params) {
    // entrywise 32-bit error is reported; the pass rule for float uses the
    // error relative to the tensor's largest gradient
    const bool pass = p.max_rel64 < 1e-6 && p.max_scaled32 < 1e-3;
    ok = ok && pass;
    params.push_back({{"param", p.name}, {"checked", p.checked}, {"kinks", p.kinks}, {"max_rel64", p.max_rel64},
                      {"max_rel32", p.max_rel32}, {"max_scaled32", p.max_scaled32}, {"pass", pass}});
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-18s %10zu  %.2e  %.2e  %.2e  %s\n", p.name.c_str(), p.checked, p.max_rel64,
                  p.max_rel32, p.max_scaled32, pass ? "ok" : "FAIL");
    std::cout << buf;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_json(out / "gradcheck.json", {{"seed", seed}, {"layers", layers}, {"model", params}, {"pass", ok}});
  std::cout << (ok ? "gradient check passed" : "gradient check FAILED") << " (" << eval::format_fixed(secs, 1) << " s)\n";
  return ok ? 0 : kExitCheckFailed;
}

int cmd_dump_frames(const Options& o) {
  const auto c = load_config(o);
  const auto out = prepare_out(o, &c);
  for (std::size_t i = 0; i < c.collect.sources.size(); ++i) {
    const auto& src = c.collect.sources[i];
    const auto map = sim::resolve_map(src.map);
    const auto& dom = c.domain(src.domain);
    for (std::size_t k = 0; k < o.count; ++k) {
      const std::uint64_t s = derive_seed(c.stage_seed("dump", i), "frame", k);
      const auto pose = data::spawn_pose(map, s);
      const auto cam = render::jitter_camera(c.camera, dom.extrinsics_jitter, s);
      char name[96];
      std::snprintf(name, sizeof name, "%s_%06zu.png", dom.id.c_str(), k);
      render::write_png((out / name).string(), render::render_frame(map, pose, cam, dom, s));
    }
    std::cout << o.count << " frames of " << dom.id << " on " << src.map << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"laneil: imitation-learning lane following"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config) sub->add_option("--config", o.config, "RunConfig JSON file");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "overrides the config seed");
    sub->add_option("--jobs", o.jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  };
  std::map<std::string, int (*)(const Options&)> commands{
      {"map", cmd_map},           {"calibrate", cmd_calibrate}, {"collect", cmd_collect},
      {"train", cmd_train},       {"eval-offline", cmd_eval_offline}, {"eval-loop", cmd_eval_loop},
      {"gradcheck", cmd_gradcheck}, {"dump-frames", cmd_dump_frames}};
  const std::map<std::string, std::string> help{
      {"map", "describe a preset or file map"},
      {"calibrate", "grid-search PD gains and intersection maneuvers"},
      {"collect", "drive the expert and write one IMDS dataset per source"},
      {"train", "train every recipe over several seeds and select the best run"},
      {"eval-offline", "per-source validation MSE matrix"},
      {"eval-loop", "closed-loop tiles and survival time on the evaluation map"},
      {"gradcheck", "finite-difference gradient checks of every layer and the full model"},
      {"dump-frames", "write raw camera frames of every source as PNG"}};
  std::map<CLI::App*, std::string> subs;
  for (const auto& [name, fn] : commands) {
    auto* sub = app.add_subcommand(name, help.at(name));
    common(sub, name != "gradcheck" && name != "map");
    if (name == "map") sub->add_option("map", o.map, "preset name or map file")->required();
    if (name == "dump-frames") sub->add_option("--count", o.count, "frames per source")->capture_default_str();
    subs[sub] = name;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  std::string chosen;
  for (const auto& [sub, name] : subs)
    if (sub->parsed()) chosen = name;
  try {
    return commands.at(chosen)(o);
  } catch (const Error& e) {
    std::cerr << "laneil " << chosen << ": " << e.what() << "\n";
    return e.kind() == ErrorKind::Config ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "laneil " << chosen << ": " << e.what() << "\n";
    return kExitRuntime;
  }
}
