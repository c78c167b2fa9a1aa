// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance [--only 1,4,5] [--strict] [--jobs N]
// Exit status is nonzero only under --strict when a criterion fails. The
// criterion lines are also written to acceptance_report.txt.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "laneil/config/config.hpp"
#include "laneil/nn/gradcheck.hpp"
#include "laneil/pipeline/pipeline.hpp"
#include "laneil/render/preprocess.hpp"

using namespace laneil;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::uint64_t kSeed = 1;

struct Outcome {
  int id;
  bool pass;
  std::string detail;
};

std::vector<Outcome> outcomes;

void report(int id, bool pass, const std::string& detail) {
  outcomes.push_back({id, pass, detail});
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fixed(double v, int d) { return eval::format_fixed(v, d); }

// ---- 1

void gradient_checks() {
  const auto t0 = Clock::now();
  const auto layers = nn::check_all_layers(7);
  const auto model = nn::check_default_model(11);
  const double secs = seconds_since(t0);
  double l64 = 0, l32 = 0;
  for (const auto& l : layers) {
    l64 = std::max(l64, l.max_rel64);
    l32 = std::max(l32, l.max_rel32);
  }
  std::size_t over = 0, total = 0;
  std::string worst;
  double worst32 = 0;
  for (const auto& p : model.params) {
    ++total;
    if (p.max_rel32 >= 1e-3) ++over;
    if (p.max_rel32 > worst32) {
      worst32 = p.max_rel32;
      worst = p.name;
    }
  }
  const bool pass = l64 < 1e-6 && l32 < 1e-3 && model.max_rel64() < 1e-6 && model.max_rel32() < 1e-3 && secs < 60;
  std::cout << "  layers: " << layers.size() << " checked, max rel64 " << sci(l64) << ", max rel32 " << sci(l32) << "\n"
            << "  full model, batch 4: max rel64 " << sci(model.max_rel64()) << ", max rel32 " << sci(worst32) << " ("
            << worst << "), " << over << "/" << total << " tensors at or above 1e-3 in 32-bit; error relative to tensor "
            << "gradient scale " << sci(model.max_scaled32()) << "\n";
  report(1, pass,
         "rel64 " + sci(std::max(l64, model.max_rel64())) + " (< 1e-6), rel32 " + sci(std::max(l32, model.max_rel32())) +
             " (< 1e-3), " + fixed(secs, 1) + " s (< 60 s)");
}

// ---- 2

void preprocessing() {
  using render::Image;
  bool ok = true;
  std::string why;
  auto check = [&](bool c, const std::string& what) {
    if (!c && ok) why = what;
    ok = ok && c;
  };
  Image ramp(480, 640);
  for (int r = 0; r < 480; ++r)
    for (int c = 0; c < 640; ++c)
      ramp.set(r, c, {static_cast<std::uint8_t>(r % 256), static_cast<std::uint8_t>(r / 256), static_cast<std::uint8_t>(c % 256)});
  const auto cropped = preprocess::crop_top_third(ramp);
  check(cropped.height == 320 && cropped.width == 640, "crop shape");
  for (int r = 0; r < 320; ++r) check(cropped.at(r, 7) == ramp.at(r + 160, 7), "crop rows 160..479");
  const auto white = preprocess::rgb_to_yuv(Image(32, 64, {255, 255, 255}));
  check(std::abs(white.at(0, 0, 0) - 1.0) <= 1.0 / 255 && std::abs(white.at(1, 0, 0) - 0.502) <= 1.0 / 255 &&
            std::abs(white.at(2, 0, 0) - 0.502) <= 1.0 / 255,
        "white YUV");
  for (int v = 0; v < 256; v += 15) {
    const auto u = static_cast<std::uint8_t>(v);
    const render::Rgb c{u, static_cast<std::uint8_t>(255 - v), static_cast<std::uint8_t>(v / 2)};
    check(preprocess::resize_bilinear(Image(320, 640, c)) == Image(32, 64, c), "constant resize");
  }
  RandomStream rng(kSeed, "acceptance-frame");
  Image noise(480, 640);
  for (auto& b : noise.data) b = static_cast<std::uint8_t>(rng.below(256));
  const auto a = preprocess::preprocess(noise), b = preprocess::preprocess(noise);
  check(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0, "bit determinism");
  report(2, ok, ok ? "crop 160..479, white YUV within 1/255, constant resize exact, bit-deterministic" : "failed: " + why);
}

// ---- 3

void expert_competence() {
  const auto m = sim::resolve_map("LOOP");
  const auto cal = expert::calibrate_gains(m, {});
  expert::ExpertConfig cfg;
  cfg.gains = cal.gains;
  expert::LaneExpert ex(m, cfg);
  const auto start = expert::default_start(m);
  const auto score = expert::score_drive(m, ex, start, 60.0);
  const auto lp = sim::lane_pose(m, start);
  const double lap = sim::total_length(sim::trace_loop(m, *lp->lane));
  const double laps = score.tiles * sim::kTileSize / lap;
  report(3, !score.infraction && laps >= 2.0,
         "kp " + fixed(cal.gains.kp, 1) + " kd " + fixed(cal.gains.kd, 1) + ": " + fixed(laps, 2) + " laps of " +
             fixed(lap, 3) + " m in 60 s, " + (score.infraction ? "infraction" : "no infraction"));
}

// ---- 4 and 5

struct Trained {
  config::RunConfig cfg;
  pipeline::ExpertSetup expert;
  std::vector<std::string> recipes, sources;
  std::vector<train::MultiSeedResult> results;
};

bool is_sim(const std::string& source) { return source.rfind("SIM", 0) == 0; }

eval::MseMatrix seed_matrix(const Trained& t, std::size_t k) {
  std::vector<std::vector<double>> rows;
  for (const auto& r : t.results) {
    const auto v = r.runs[k].final_val();
    std::vector<double> row;
    for (const auto& s : t.sources) row.push_back(v.at(s));
    rows.push_back(row);
  }
  return eval::make_matrix(t.recipes, t.sources, rows);
}

Trained offline_pattern(std::size_t jobs) {
  Trained t;
  t.cfg = config::parse(R"({"seed": 1, "collect": {"frames": 2000}, "train": {"epochs": 30, "seeds": 3}})");
  const auto t0 = Clock::now();
  t.expert = pipeline::resolve_expert(t.cfg);
  const auto datasets = pipeline::collect_all(t.cfg, t.expert.cfg, jobs);
  const auto splits = pipeline::split_sources(t.cfg, datasets);
  const auto val = pipeline::val_subsets(splits);
  for (const auto& v : val) t.sources.push_back(v.source);
  const auto settings = pipeline::train_settings(t.cfg);
  std::cout << "  collected " << datasets.size() << " x " << t.cfg.collect.frames << " frames in "
            << fixed(seconds_since(t0), 0) << " s" << std::endl;
  for (std::size_t r = 0; r < t.cfg.train.recipes.size(); ++r) {
    const auto& rec = t.cfg.train.recipes[r];
    const auto view = pipeline::recipe_view(t.cfg, splits, r);
    t.results.push_back(train::multi_seed(view, val, settings, t.cfg.train.seeds, jobs));
    t.recipes.push_back(rec.name);
    std::cout << "  trained " << rec.name << " (" << view.size() << " samples) at " << fixed(seconds_since(t0) / 60, 1)
              << " min" << std::endl;
  }
  const double minutes = seconds_since(t0) / 60;

  // mean over seeds
  std::vector<std::vector<double>> mean_rows;
  for (const auto& r : t.results) {
    std::vector<double> row;
    for (const auto& s : t.sources) row.push_back(r.mean_val.at(s));
    mean_rows.push_back(row);
  }
  const auto mean = eval::make_matrix(t.recipes, t.sources, mean_rows);
  std::cout << "  validation MSE, mean of " << t.cfg.train.seeds << " seeds\n" << eval::to_text(mean);

  // (a) own-type error at least 2x below cross-type error, every non-hybrid recipe
  bool a = true;
  double worst_ratio = 1e300;
  std::string worst_row;
  for (std::size_t r = 0; r < t.recipes.size(); ++r) {
    const auto& trained_on = t.cfg.train.recipes[r].sources;
    const bool sim_type = is_sim(trained_on[0]);
    bool mixed = false;
    for (const auto& s : trained_on) mixed = mixed || is_sim(s) != sim_type;
    if (mixed) continue;
    double own = 0, cross = 1e300;
    for (std::size_t s = 0; s < t.sources.size(); ++s) {
      if (std::find(trained_on.begin(), trained_on.end(), t.sources[s]) != trained_on.end())
        own = std::max(own, mean.mse[r][s]);
      else if (is_sim(t.sources[s]) != sim_type)
        cross = std::min(cross, mean.mse[r][s]);
    }
    const double ratio = cross / own;
    if (ratio < worst_ratio) {
      worst_ratio = ratio;
      worst_row = t.recipes[r];
    }
    a = a && ratio >= 2.0;
  }

  // (b) HYBRID strictly lowest AVG per seed
  std::size_t wins = 0;
  std::string per_seed;
  for (std::size_t k = 0; k < t.cfg.train.seeds; ++k) {
    const auto m = seed_matrix(t, k);
    std::size_t best = 0;
    bool strict = true;
    for (std::size_t r = 1; r < m.rows.size(); ++r)
      if (m.avg[r] < m.avg[best]) best = r;
    for (std::size_t r = 0; r < m.rows.size(); ++r)
      if (r != best && m.avg[r] == m.avg[best]) strict = false;
    const bool win = m.rows[best] == "HYBRID" && strict;
    wins += win;
    per_seed += (per_seed.empty() ? "" : ", ") + m.rows[best] + " " + fixed(m.avg[best], 4);
    std::cout << "  seed " << k << "\n" << eval::to_text(m);
  }
  const bool b = wins >= 2;
  const double cores = std::max(1u, std::thread::hardware_concurrency());
  const double bound = 30.0 * 4.0 / cores;
  const bool time_ok = minutes < bound;
  report(4, a && b && time_ok,
         "(a) worst cross/own ratio " + fixed(worst_ratio, 1) + " on " + worst_row + " (>= 2)" + (a ? "" : " FAIL") +
             "; (b) HYBRID lowest AVG in " + std::to_string(wins) + "/" + std::to_string(t.cfg.train.seeds) +
             " seeds [" + per_seed + "]" + (b ? "" : " FAIL") + "; " + fixed(minutes, 1) + " min on " +
             fixed(cores, 0) + " core(s), bound " + fixed(bound, 0) + " min" + (time_ok ? "" : " FAIL"));
  return t;
}

void closed_loop_pattern(const Trained& t, std::size_t jobs) {
  auto c = t.cfg;
  c.eval.policies = {"EXPERT", "HYBRID", "SIM"};
  const auto map = sim::resolve_map(c.eval.map);
  std::vector<eval::NamedPolicy> policies{{"EXPERT", pipeline::expert_factory(map, t.expert.cfg)}};
  for (const char* name : {"HYBRID", "SIM"}) {
    const auto r = std::find(t.recipes.begin(), t.recipes.end(), name) - t.recipes.begin();
    const auto& res = t.results[static_cast<std::size_t>(r)];
    policies.push_back({name, pipeline::network_factory(std::make_shared<const nn::Model<float>>(res.runs[res.best].model))});
  }
  std::vector<eval::SuiteReport> reps;
  for (std::size_t d = 0; d < c.eval.domains.size(); ++d) {
    const auto scenarios = pipeline::loop_scenarios(c, map, c.eval.domains[d]);
    reps.push_back(eval::scenario_suite(policies, scenarios, c.stage_seed("eval", d), jobs, false, pipeline::loop_options(c)));
    std::cout << "  " << c.eval.domains[d] << " on " << c.eval.map << "\n" << eval::to_text(reps.back());
  }
  const auto& clean = reps[0];
  const auto& shifted = reps[1];
  const double e0 = clean.total_tiles("EXPERT"), e1 = shifted.total_tiles("EXPERT");
  const double h0 = clean.total_tiles("HYBRID"), h1 = shifted.total_tiles("HYBRID");
  const double s0 = clean.total_tiles("SIM"), s1 = shifted.total_tiles("SIM");
  const bool a = h0 >= 0.6 * e0 && h1 >= 0.6 * e1;
  const bool b = s1 <= 0.7 * s0;
  const bool cc = h1 > s1;
  report(5, a && b && cc,
         "(a) HYBRID/EXPERT " + fixed(h0, 2) + "/" + fixed(e0, 2) + " clean, " + fixed(h1, 2) + "/" + fixed(e1, 2) +
             " shifted (>= 60%)" + (a ? "" : " FAIL") + "; (b) SIM " + fixed(s0, 2) + " -> " + fixed(s1, 2) +
             " (drop " + fixed(s0 > 0 ? 100 * (1 - s1 / s0) : 0, 0) + "%, >= 30%)" + (b ? "" : " FAIL") +
             "; (c) shifted HYBRID " + fixed(h1, 2) + " > SIM " + fixed(s1, 2) + (cc ? "" : " FAIL"));
}

// ---- 6

void determinism() {
  const auto c = config::parse(R"({"seed": 2, "collect": {"frames": 120},
    "train": {"epochs": 2, "seeds": 2, "recipes": [{"name": "HYBRID", "sources": ["SIM-LP", "PSEUDO-REAL-B"]}]},
    "eval": {"scenarios": 2, "time_limit": 4, "policies": ["EXPERT", "HYBRID"]}})");
  struct Run {
    std::string calibration;
    std::vector<std::vector<unsigned char>> datasets, checkpoints;
    std::string train, offline, loop;
  };
  auto run = [&](std::size_t jobs) {
    Run out;
    const auto setup = pipeline::resolve_expert(c);
    out.calibration = pipeline::calibration_json(setup).dump();
    const auto ds = pipeline::collect_all(c, setup.cfg, jobs);
    for (const auto& d : ds) out.datasets.push_back(data::encode_imds(d));
    const auto splits = pipeline::split_sources(c, ds);
    const auto val = pipeline::val_subsets(splits);
    auto res = train::multi_seed(pipeline::recipe_view(c, splits, 0), val, pipeline::train_settings(c), c.train.seeds, jobs);
    config::json hist = config::json::array();
    for (auto& r : res.runs) {
      out.checkpoints.push_back(nn::encode_checkpoint(r.model, &r.adam));
      for (const auto& e : r.history.epochs) hist.push_back({e.train_loss, e.val_mse});
    }
    out.train = hist.dump() + std::to_string(res.best);
    eval::NamedModel nm{"HYBRID", &res.runs[res.best].model};
    out.offline = eval::to_json(eval::offline_matrix({nm}, val)).dump();
    const auto map = sim::resolve_map(c.eval.map);
    auto model = std::make_shared<const nn::Model<float>>(res.runs[res.best].model);
    std::vector<eval::NamedPolicy> pol{{"EXPERT", pipeline::expert_factory(map, setup.cfg)},
                                       {"HYBRID", pipeline::network_factory(model)}};
    const auto scen = pipeline::loop_scenarios(c, map, "PSEUDO-REAL-B");
    out.loop = eval::to_json(eval::scenario_suite(pol, scen, c.stage_seed("eval", 1), jobs, true, pipeline::loop_options(c))).dump();
    return out;
  };
  const Run a = run(1), b = run(1), t = run(3);
  std::vector<std::string> bad;
  auto same = [&](const Run& x, const Run& y, const std::string& tag) {
    if (x.calibration != y.calibration) bad.push_back("calibration" + tag);
    if (x.datasets != y.datasets) bad.push_back("datasets" + tag);
    if (x.checkpoints != y.checkpoints) bad.push_back("checkpoints" + tag);
    if (x.train != y.train) bad.push_back("training history" + tag);
    if (x.offline != y.offline) bad.push_back("offline report" + tag);
    if (x.loop != y.loop) bad.push_back("closed-loop report" + tag);
  };
  same(a, b, "");
  same(a, t, " (3 threads)");
  std::string detail = "calibration, 4 datasets, 2 checkpoints, histories, offline and closed-loop reports";
  if (bad.empty())
    detail += " bit-identical across repeats and thread counts";
  else
    for (const auto& s : bad) detail += "; differs: " + s;
  report(6, bad.empty(), detail);
}

// ---- 7

void round_trips() {
  std::vector<std::string> bad;
  RandomStream rng(kSeed, "acceptance-imds");
  auto make = [&](std::size_t n) {
    data::Dataset ds;
    for (std::size_t i = 0; i < n; ++i) {
      data::Sample s;
      for (auto& v : s.input.data) v = static_cast<float>(rng.uniform());
      s.action = {static_cast<float>(rng.uniform(-1, 1)), static_cast<float>(rng.uniform(-1, 1))};
      s.domain_id = static_cast<std::uint8_t>(i % 4);
      ds.add(std::move(s), render::domain_name(static_cast<std::uint8_t>(i % 4)));
    }
    return ds;
  };
  const auto dir = std::filesystem::temp_directory_path() / "laneil_acceptance";
  std::filesystem::create_directories(dir);
  const auto two = make(2);
  const auto p2 = (dir / "two.imds").string();
  data::write_imds(two, p2);
  const auto size2 = std::filesystem::file_size(p2);
  if (size2 != 49186) bad.push_back("2-sample file is " + std::to_string(size2) + " bytes");
  for (std::size_t n : {0, 1, 2, 37}) {
    const auto ds = make(n);
    const auto p = (dir / "rt.imds").string();
    data::write_imds(ds, p);
    const auto back = data::read_imds(p);
    if (data::encode_imds(back) != data::encode_imds(ds)) bad.push_back("IMDS n=" + std::to_string(n));
  }
  nn::Model<float> m(nn::default_model_config());
  m.init(kSeed);
  nn::AdamState<float> st;
  nn::Tensor<float> x({4, 3, 32, 64}), dy;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());
  nn::Tensor<float> tgt({4, 2}, 0.1f);
  m.zero_grad();
  nn::mse_loss(m.forward(x, nn::RunMode::Train, 0), tgt, &dy);
  m.backward(dy);
  nn::adam_step(m.params(), st, {});
  const auto pm = (dir / "m.imnn").string();
  for (bool with_adam : {false, true}) {
    nn::save_checkpoint(pm, m, with_adam ? &st : nullptr);
    auto ck = nn::load_checkpoint(pm);
    const auto again = nn::encode_checkpoint(ck.model, ck.adam ? &*ck.adam : nullptr);
    if (again != nn::encode_checkpoint(m, with_adam ? &st : nullptr)) bad.push_back(with_adam ? "IMNN with optimizer" : "IMNN");
    if (ck.model.forward(x, nn::RunMode::Eval) != m.forward(x, nn::RunMode::Eval)) bad.push_back("IMNN outputs");
  }
  std::filesystem::remove_all(dir);
  std::string detail = "2-sample IMDS " + std::to_string(size2) + " bytes (49186)";
  if (bad.empty())
    detail += "; IMDS and IMNN files round-trip bit-exactly";
  else
    for (const auto& s : bad) detail += "; failed: " + s;
  report(7, bad.empty(), detail);
}

// ---- 8

void selection_rule() {
  const std::vector<std::string> src{"SIM-LP", "SIM-IS", "PSEUDO-REAL-A", "PSEUDO-REAL-B"};
  auto row = [&](std::vector<double> v) {
    train::SourceMse m;
    for (std::size_t i = 0; i < v.size(); ++i) m[src[i]] = v[i];
    return m;
  };
  const std::vector<train::SourceMse> runs{row({0.02, 0.01, 0.03, 0.02}), row({0.0178, 0.0070, 0.0108, 0.0209}),
                                           row({0.019, 0.008, 0.011, 0.021})};
  const auto best = train::select_best(runs);
  std::size_t argmin = 0;
  for (std::size_t i = 1; i < runs.size(); ++i)
    if (train::source_average(runs[i]) < train::source_average(runs[argmin])) argmin = i;
  const auto shown = eval::format_fixed(train::source_average(runs[1]), 4);
  const auto table = eval::to_text(eval::make_matrix({"HYBRID"}, src, {{0.0178, 0.0070, 0.0108, 0.0209}}));
  const bool pass = best == 1 && argmin == 1 && shown == "0.0141" && table.find("0.0141") != std::string::npos;
  report(8, pass, "select_best -> run " + std::to_string(best) + " (argmin " + std::to_string(argmin) +
                      "); reference HYBRID row averages to " + shown + " (0.0141)");
}

std::set<int> parse_only(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.insert(std::stoi(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only{1, 2, 3, 4, 5, 6, 7, 8};
  bool strict = false;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--strict") {
      strict = true;
    } else if (a == "--only" && i + 1 < argc) {
      only = parse_only(argv[++i]);
    } else if (a == "--jobs" && i + 1 < argc) {
      jobs = std::stoul(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--jobs N] [--strict]\n";
      return 2;
    }
  }
  if (only.count(5)) only.insert(4);
  try {
    if (only.count(1)) gradient_checks();
    if (only.count(2)) preprocessing();
    if (only.count(3)) expert_competence();
    if (only.count(6)) determinism();
    if (only.count(7)) round_trips();
    if (only.count(8)) selection_rule();
    if (only.count(4)) {
      const auto t = offline_pattern(jobs);
      if (only.count(5)) closed_loop_pattern(t, jobs);
    }
  } catch (const std::exception& e) {
    std::cerr << "acceptance aborted: " << e.what() << "\n";
    return 3;
  }
  std::sort(outcomes.begin(), outcomes.end(), [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
  std::size_t failed = 0;
  std::cout << "\nsummary\n";
  for (const auto& o : outcomes) {
    std::cout << "criterion " << o.id << ": " << (o.pass ? "PASS" : "FAIL") << "\n";
    failed += !o.pass;
  }
  std::cout << outcomes.size() - failed << "/" << outcomes.size() << " criteria pass\n";
  std::ofstream out("acceptance_report.txt");
  for (const auto& o : outcomes) out << "criterion " << o.id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "\n";
  return strict && failed ? 1 : 0;
}
