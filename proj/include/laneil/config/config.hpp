#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "laneil/core/binary.hpp"
#include "laneil/core/error.hpp"
#include "laneil/expert/expert.hpp"
#include "laneil/nn/checkpoint.hpp"
#include "laneil/render/camera.hpp"
#include "laneil/render/domain.hpp"
#include "laneil/train/train.hpp"

namespace laneil::config {

using nlohmann::json;

struct SourceSpec {
  std::string map;
  std::string domain;

  friend bool operator==(const SourceSpec&, const SourceSpec&) = default;
};

// A training recipe mixes the training parts of the named sources in equal
// proportion, total = k * smallest training part.
struct Recipe {
  std::string name;
  std::vector<std::string> sources;  // domain ids

  friend bool operator==(const Recipe&, const Recipe&) = default;
};

struct SimSection {
  double dt = sim::kDefaultDt;
  sim::DiffDrive drive;
};

struct ExpertSection {
  std::optional<expert::PDGains> gains;        // calibrated when absent
  std::optional<expert::TurnShapes> shapes;    // calibrated when absent
  expert::GainGrid grid;
  std::string calibration_map = "LOOP";
  std::string maneuver_map = "CROSS";
  double calibration_limit = 60.0;
  expert::Perturbation perturb{0.5, 0.3, 0.3};
  double v_nominal = 0.7;
  double steer_scale = 0.25;
};

struct CollectSection {
  std::size_t frames = 2000;  // per source
  double episode_s = 10.0;
  bool drop_perturbed = false;
  std::vector<SourceSpec> sources{
      {"LOOP", "SIM-LP"}, {"CROSS", "SIM-IS"}, {"LOOP", "PSEUDO-REAL-A"}, {"CROSS", "PSEUDO-REAL-B"}};
};

struct TrainSection {
  std::size_t epochs = 50;
  std::size_t batch = 64;
  nn::AdamSettings adam;
  std::size_t seeds = 5;
  double val_fraction = 0.3;
  std::string data_dir;  // empty: the output directory
  std::vector<Recipe> recipes{{"HYBRID", {"SIM-LP", "SIM-IS", "PSEUDO-REAL-A", "PSEUDO-REAL-B"}},
                              {"SIM", {"SIM-LP", "SIM-IS"}},
                              {"PSEUDO-REAL", {"PSEUDO-REAL-A", "PSEUDO-REAL-B"}},
                              {"SIM-LP", {"SIM-LP"}},
                              {"SIM-IS", {"SIM-IS"}},
                              {"PSEUDO-REAL-A", {"PSEUDO-REAL-A"}},
                              {"PSEUDO-REAL-B", {"PSEUDO-REAL-B"}}};
  nn::ModelConfig model = nn::default_model_config();
};

struct EvalSection {
  std::string map = "HELDOUT";
  std::size_t scenarios = 3;
  double time_limit = 30.0;
  std::vector<std::string> domains{"SIM-LP", "PSEUDO-REAL-B"};
  std::vector<std::string> policies{"EXPERT", "HYBRID", "SIM", "PSEUDO-REAL"};
  std::string checkpoint_dir;  // empty: the output directory
  bool trace = false;
};

struct RunConfig {
  std::uint64_t seed = 0;
  SimSection sim;
  render::CameraModel camera;
  std::vector<render::DomainConfig> domains = render::domain_presets();
  ExpertSection expert;
  CollectSection collect;
  TrainSection train;
  EvalSection eval;

  const render::DomainConfig& domain(const std::string& id) const {
    for (const auto& d : domains)
      if (d.id == id) return d;
    fail(ErrorKind::Config, "unknown domain " + id);
  }
  const Recipe& recipe(const std::string& name) const {
    for (const auto& r : train.recipes)
      if (r.name == name) return r;
    fail(ErrorKind::Config, "unknown recipe " + name);
  }

  // Named per-stage seeds; every stage derives from the one top-level seed.
  std::uint64_t stage_seed(const char* stage, std::uint64_t index = 0) const { return derive_seed(seed, stage, index); }

  void validate() const;
};

namespace detail {

[[noreturn]] inline void bad(const std::string& where, const std::string& what) {
  fail(ErrorKind::Config, "config " + where + ": " + what);
}

// Reads keys of one object and rejects any key that was never asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) bad(path_, "expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      const auto& v = j_.at(key);
      if (!v.is_number_integer()) bad(where(key), "expected an integer");
      if (std::is_unsigned_v<T> && !v.is_number_unsigned()) bad(where(key), "must not be negative");
    }
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      bad(where(key), e.what());
    }
  }

  template <typename T>
  void get(const char* key, std::optional<T>& out) {
    T v{};
    if (j_.contains(key)) {
      get(key, v);
      out = v;
    } else {
      seen_.insert(key);
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) bad(where(it.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline json rgb_json(render::Rgb c) { return json::array({c.r, c.g, c.b}); }

inline render::Rgb rgb_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) bad(where, "expected [r, g, b]");
  render::Rgb c;
  std::uint8_t* out[3] = {&c.r, &c.g, &c.b};
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number_integer() || j[i].get<int>() < 0 || j[i].get<int>() > 255) bad(where, "channels must be 0..255");
    *out[i] = static_cast<std::uint8_t>(j[i].get<int>());
  }
  return c;
}

inline json shape_json(const expert::TurnShape& s) { return {{"lead_steps", s.lead_steps}, {"arc_steps", s.arc_steps}}; }

inline expert::TurnShape shape_from(const json& j, const std::string& where) {
  Section s(j, where);
  expert::TurnShape t;
  s.get("lead_steps", t.lead_steps);
  s.get("arc_steps", t.arc_steps);
  s.finish();
  if (t.lead_steps < 0 || t.arc_steps < 1) bad(where, "need lead_steps >= 0 and arc_steps >= 1");
  return t;
}

}  // namespace detail

inline json gains_json(const expert::PDGains& g) {
  return {{"kp", g.kp}, {"kd", g.kd}, {"v_nominal", g.v_nominal}, {"steer_scale", g.steer_scale}};
}

inline json shapes_json(const expert::TurnShapes& s) {
  return {{"straight", detail::shape_json(s.straight)},
          {"left", detail::shape_json(s.left)},
          {"right", detail::shape_json(s.right)}};
}

inline json domain_json(const render::DomainConfig& d) {
  const auto& p = d.palette;
  return {{"palette",
           {{"road", detail::rgb_json(p.road)},
            {"background", detail::rgb_json(p.background)},
            {"white", detail::rgb_json(p.white)},
            {"yellow", detail::rgb_json(p.yellow)},
            {"sky", detail::rgb_json(p.sky)}}},
          {"lighting_gain", d.lighting_gain},
          {"lighting_bias", d.lighting_bias},
          {"noise_sigma", d.noise_sigma},
          {"clutter_count", d.clutter_count},
          {"clutter_seed", d.clutter_seed},
          {"dash_length", d.dash_length},
          {"dash_gap", d.dash_gap},
          {"jitter_pitch_deg", d.extrinsics_jitter.pitch * 180.0 / sim::kPi},
          {"jitter_height", d.extrinsics_jitter.height}};
}

// Full echo of the resolved configuration, defaults included.
inline json to_json(const RunConfig& c) {
  json domains = json::object();
  for (const auto& d : c.domains) domains[d.id] = domain_json(d);
  json sources = json::array();
  for (const auto& s : c.collect.sources) sources.push_back({{"map", s.map}, {"domain", s.domain}});
  json recipes = json::array();
  for (const auto& r : c.train.recipes) recipes.push_back({{"name", r.name}, {"sources", r.sources}});
  json expert{{"grid", {{"kp", c.expert.grid.kp}, {"kd", c.expert.grid.kd}}},
              {"calibration_map", c.expert.calibration_map},
              {"maneuver_map", c.expert.maneuver_map},
              {"calibration_limit", c.expert.calibration_limit},
              {"perturb",
               {{"rate", c.expert.perturb.rate}, {"burst", c.expert.perturb.burst}, {"magnitude", c.expert.perturb.magnitude}}},
              {"v_nominal", c.expert.v_nominal},
              {"steer_scale", c.expert.steer_scale}};
  if (c.expert.gains) expert["gains"] = {{"kp", c.expert.gains->kp}, {"kd", c.expert.gains->kd}};
  if (c.expert.shapes) expert["shapes"] = shapes_json(*c.expert.shapes);
  return {
      {"seed", c.seed},
      {"sim",
       {{"dt", c.sim.dt},
        {"wheel_radius", c.sim.drive.wheel_radius},
        {"baseline", c.sim.drive.baseline},
        {"omega_max", c.sim.drive.omega_max}}},
      {"camera",
       {{"fov_deg", c.camera.horizontal_fov * 180.0 / sim::kPi},
        {"pitch_deg", c.camera.pitch * 180.0 / sim::kPi},
        {"mount_height", c.camera.mount_height},
        {"forward_offset", c.camera.forward_offset}}},
      {"domains", domains},
      {"expert", expert},
      {"collect",
       {{"frames", c.collect.frames},
        {"episode_s", c.collect.episode_s},
        {"drop_perturbed", c.collect.drop_perturbed},
        {"sources", sources}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch", c.train.batch},
        {"lr", c.train.adam.lr},
        {"beta1", c.train.adam.beta1},
        {"beta2", c.train.adam.beta2},
        {"adam_eps", c.train.adam.eps},
        {"seeds", c.train.seeds},
        {"val_fraction", c.train.val_fraction},
        {"data_dir", c.train.data_dir},
        {"recipes", recipes},
        {"model", nn::config_to_json(c.train.model)}}},
      {"eval",
       {{"map", c.eval.map},
        {"scenarios", c.eval.scenarios},
        {"time_limit", c.eval.time_limit},
        {"domains", c.eval.domains},
        {"policies", c.eval.policies},
        {"checkpoint_dir", c.eval.checkpoint_dir},
        {"trace", c.eval.trace}}},
  };
}

inline RunConfig from_json(const json& j) {
  using detail::Section;
  RunConfig c;
  Section top(j, "");
  if (!j.contains("seed")) detail::bad("seed", "missing (the top-level seed is mandatory)");
  top.get("seed", c.seed);

  if (const json* s = top.sub("sim")) {
    Section sec(*s, "sim");
    sec.get("dt", c.sim.dt);
    sec.get("wheel_radius", c.sim.drive.wheel_radius);
    sec.get("baseline", c.sim.drive.baseline);
    sec.get("omega_max", c.sim.drive.omega_max);
    sec.finish();
  }

  if (const json* s = top.sub("camera")) {
    Section sec(*s, "camera");
    double fov = c.camera.horizontal_fov * 180.0 / sim::kPi, pitch = c.camera.pitch * 180.0 / sim::kPi;
    sec.get("fov_deg", fov);
    sec.get("pitch_deg", pitch);
    sec.get("mount_height", c.camera.mount_height);
    sec.get("forward_offset", c.camera.forward_offset);
    sec.finish();
    c.camera.horizontal_fov = render::deg(fov);
    c.camera.pitch = render::deg(pitch);
  }

  if (const json* s = top.sub("domains")) {
    if (!s->is_object()) detail::bad("domains", "expected an object keyed by domain id");
    for (auto it = s->begin(); it != s->end(); ++it) {
      render::DomainConfig* d = nullptr;
      for (auto& x : c.domains)
        if (x.id == it.key()) d = &x;
      if (!d) detail::bad("domains." + it.key(), "unknown domain id (known: SIM-LP, SIM-IS, PSEUDO-REAL-A, PSEUDO-REAL-B)");
      const std::string path = "domains." + it.key();
      Section sec(it.value(), path);
      if (const json* p = sec.sub("palette")) {
        Section ps(*p, path + ".palette");
        auto color = [&](const char* key, render::Rgb& out) {
          if (const json* v = ps.sub(key)) out = detail::rgb_from(*v, ps.where(key));
        };
        color("road", d->palette.road);
        color("background", d->palette.background);
        color("white", d->palette.white);
        color("yellow", d->palette.yellow);
        color("sky", d->palette.sky);
        ps.finish();
      }
      double jitter_pitch = d->extrinsics_jitter.pitch * 180.0 / sim::kPi;
      sec.get("lighting_gain", d->lighting_gain);
      sec.get("lighting_bias", d->lighting_bias);
      sec.get("noise_sigma", d->noise_sigma);
      sec.get("clutter_count", d->clutter_count);
      sec.get("clutter_seed", d->clutter_seed);
      sec.get("dash_length", d->dash_length);
      sec.get("dash_gap", d->dash_gap);
      sec.get("jitter_pitch_deg", jitter_pitch);
      sec.get("jitter_height", d->extrinsics_jitter.height);
      sec.finish();
      d->extrinsics_jitter.pitch = render::deg(jitter_pitch);
    }
  }

  if (const json* s = top.sub("expert")) {
    Section sec(*s, "expert");
    if (const json* g = sec.sub("gains")) {
      Section gs(*g, "expert.gains");
      expert::PDGains pd;
      gs.get("kp", pd.kp);
      gs.get("kd", pd.kd);
      gs.finish();
      c.expert.gains = pd;
    }
    if (const json* g = sec.sub("grid")) {
      Section gs(*g, "expert.grid");
      gs.get("kp", c.expert.grid.kp);
      gs.get("kd", c.expert.grid.kd);
      gs.finish();
    }
    if (const json* sh = sec.sub("shapes")) {
      Section ss(*sh, "expert.shapes");
      expert::TurnShapes shapes;
      for (const char* key : {"straight", "left", "right"}) {
        const json* t = ss.sub(key);
        if (!t) detail::bad("expert.shapes." + std::string(key), "missing");
        const auto shape = detail::shape_from(*t, "expert.shapes." + std::string(key));
        (std::string(key) == "straight" ? shapes.straight : std::string(key) == "left" ? shapes.left : shapes.right) = shape;
      }
      ss.finish();
      c.expert.shapes = shapes;
    }
    if (const json* p = sec.sub("perturb")) {
      Section ps(*p, "expert.perturb");
      ps.get("rate", c.expert.perturb.rate);
      ps.get("burst", c.expert.perturb.burst);
      ps.get("magnitude", c.expert.perturb.magnitude);
      ps.finish();
    }
    sec.get("calibration_map", c.expert.calibration_map);
    sec.get("maneuver_map", c.expert.maneuver_map);
    sec.get("calibration_limit", c.expert.calibration_limit);
    sec.get("v_nominal", c.expert.v_nominal);
    sec.get("steer_scale", c.expert.steer_scale);
    sec.finish();
  }

  if (const json* s = top.sub("collect")) {
    Section sec(*s, "collect");
    sec.get("frames", c.collect.frames);
    sec.get("episode_s", c.collect.episode_s);
    sec.get("drop_perturbed", c.collect.drop_perturbed);
    if (const json* src = sec.sub("sources")) {
      if (!src->is_array()) detail::bad("collect.sources", "expected an array");
      c.collect.sources.clear();
      for (std::size_t i = 0; i < src->size(); ++i) {
        Section ss((*src)[i], "collect.sources[" + std::to_string(i) + "]");
        SourceSpec spec;
        ss.get("map", spec.map);
        ss.get("domain", spec.domain);
        ss.finish();
        c.collect.sources.push_back(spec);
      }
    }
    sec.finish();
  }

  if (const json* s = top.sub("train")) {
    Section sec(*s, "train");
    sec.get("epochs", c.train.epochs);
    sec.get("batch", c.train.batch);
    sec.get("lr", c.train.adam.lr);
    sec.get("beta1", c.train.adam.beta1);
    sec.get("beta2", c.train.adam.beta2);
    sec.get("adam_eps", c.train.adam.eps);
    sec.get("seeds", c.train.seeds);
    sec.get("val_fraction", c.train.val_fraction);
    sec.get("data_dir", c.train.data_dir);
    if (const json* r = sec.sub("recipes")) {
      if (!r->is_array()) detail::bad("train.recipes", "expected an array");
      c.train.recipes.clear();
      for (std::size_t i = 0; i < r->size(); ++i) {
        Section rs((*r)[i], "train.recipes[" + std::to_string(i) + "]");
        Recipe rec;
        rs.get("name", rec.name);
        rs.get("sources", rec.sources);
        rs.finish();
        c.train.recipes.push_back(rec);
      }
    }
    if (const json* m = sec.sub("model")) c.train.model = nn::config_from_json(*m);
    sec.finish();
  }

  if (const json* s = top.sub("eval")) {
    Section sec(*s, "eval");
    sec.get("map", c.eval.map);
    sec.get("scenarios", c.eval.scenarios);
    sec.get("time_limit", c.eval.time_limit);
    sec.get("domains", c.eval.domains);
    sec.get("policies", c.eval.policies);
    sec.get("checkpoint_dir", c.eval.checkpoint_dir);
    sec.get("trace", c.eval.trace);
    sec.finish();
  }
  top.finish();
  c.validate();
  return c;
}

inline void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& where, const std::string& what) {
    if (!ok) detail::bad(where, what);
  };
  check(sim.dt > 0 && std::isfinite(sim.dt), "sim.dt", "must be positive");
  check(sim.drive.wheel_radius > 0 && sim.drive.baseline > 0 && sim.drive.omega_max > 0, "sim", "drive parameters must be positive");
  check(camera.valid() && camera.horizontal_fov > 0 && camera.horizontal_fov < sim::kPi && camera.mount_height > 0, "camera",
        "bad camera geometry");
  for (const auto& d : domains) {
    try {
      d.validate();
    } catch (const Error& e) {
      detail::bad("domains." + d.id, e.what());
    }
  }
  check(!expert.grid.kp.empty() && !expert.grid.kd.empty(), "expert.grid", "kp and kd lists must be non-empty");
  for (double v : expert.grid.kp) check(v > 0, "expert.grid.kp", "gains must be positive");
  for (double v : expert.grid.kd) check(v > 0, "expert.grid.kd", "gains must be positive");
  if (expert.gains) check(expert.gains->kp > 0 && expert.gains->kd > 0, "expert.gains", "gains must be positive");
  check(expert.v_nominal > 0 && expert.v_nominal <= 1, "expert.v_nominal", "must lie in (0, 1]");
  check(expert.steer_scale > 0, "expert.steer_scale", "must be positive");
  check(expert.calibration_limit > 0, "expert.calibration_limit", "must be positive");
  try {
    expert.perturb.validate();
  } catch (const Error& e) {
    detail::bad("expert.perturb", e.what());
  }
  check(collect.frames > 0, "collect.frames", "must be positive");
  check(collect.episode_s > 0, "collect.episode_s", "must be positive");
  check(!collect.sources.empty(), "collect.sources", "need at least one source");
  std::set<std::string> source_domains;
  for (const auto& s : collect.sources) {
    domain(s.domain);
    check(source_domains.insert(s.domain).second, "collect.sources",
          "domain " + s.domain + " listed twice (sources are named by domain)");
  }
  check(train.epochs >= 1, "train.epochs", "must be at least 1");
  check(train.batch >= 2, "train.batch", "must be at least 2 (batchnorm)");
  check(train.adam.lr >= 0 && train.adam.beta1 >= 0 && train.adam.beta1 < 1 && train.adam.beta2 >= 0 &&
            train.adam.beta2 < 1 && train.adam.eps > 0,
        "train", "bad optimizer settings");
  check(train.seeds >= 1, "train.seeds", "must be at least 1");
  check(train.val_fraction > 0 && train.val_fraction < 1, "train.val_fraction", "must lie in (0, 1)");
  std::set<std::string> names;
  for (const auto& r : train.recipes) {
    check(!r.name.empty() && names.insert(r.name).second, "train.recipes", "recipe names must be unique and non-empty");
    check(r.name != "EXPERT", "train.recipes", "EXPERT is reserved for the expert policy");
    check(!r.sources.empty(), "train.recipes", "recipe " + r.name + " has no sources");
    for (const auto& s : r.sources)
      check(source_domains.count(s) > 0, "train.recipes", "recipe " + r.name + " uses " + s + ", which is not collected");
  }
  check(eval.scenarios >= 1, "eval.scenarios", "must be at least 1");
  check(eval.time_limit > 0, "eval.time_limit", "must be positive");
  for (const auto& d : eval.domains) domain(d);
  for (const auto& p : eval.policies)
    if (p != "EXPERT") recipe(p);
}

inline RunConfig parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

inline RunConfig load(const std::string& path) {
  std::vector<unsigned char> bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::Config, "cannot read config " + path + ": " + e.what());
  }
  return parse(std::string(bytes.begin(), bytes.end()));
}

// Expert settings with the PD defaults applied; gains and shapes may still
// need calibration.
inline expert::ExpertConfig base_expert(const RunConfig& c) {
  expert::ExpertConfig e;
  e.gains.v_nominal = c.expert.v_nominal;
  e.gains.steer_scale = c.expert.steer_scale;
  if (c.expert.gains) {
    e.gains.kp = c.expert.gains->kp;
    e.gains.kd = c.expert.gains->kd;
  }
  e.dt = c.sim.dt;
  e.drive = c.sim.drive;
  e.shapes = c.expert.shapes ? *c.expert.shapes : expert::seed_shapes(e.gains, e.dt, e.drive);
  e.perturb = c.expert.perturb;
  return e;
}

}  // namespace laneil::config
