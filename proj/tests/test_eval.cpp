#include <gtest/gtest.h>

#include <cmath>

#include "laneil/eval/eval.hpp"
#include "laneil/expert/expert.hpp"

using namespace laneil;
using namespace laneil::eval;

namespace {

nn::ModelConfig small_config() {
  using nn::LayerSpec;
  nn::ModelConfig c;
  c.input = {3, 32, 64};
  c.layers = {LayerSpec::conv(4, 5, 4), LayerSpec::relu(), LayerSpec::flatten(), LayerSpec::ic(0.05, false),
              LayerSpec::fc(2)};
  return c;
}

// All weights zero, output bias set: the network ignores its input.
nn::Model<float> constant_model(float a, float b) {
  nn::Model<float> m(small_config());
  m.init(1);
  auto params = m.params();
  for (auto& p : params) p.value->fill(0.0f);
  auto* bias = params.back().value;
  (*bias)[0] = a;
  (*bias)[1] = b;
  return m;
}

class FixedPolicy final : public sim::Policy {
 public:
  explicit FixedPolicy(sim::Action a) : a_(a) {}
  sim::Decision act(const sim::StepContext&) override { return {a_, false}; }

 private:
  sim::Action a_;
};

data::Dataset constant_action_set(std::size_t n, float a, float b, std::uint64_t seed) {
  RandomStream rng(seed, "inputs");
  data::Dataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    data::Sample s;
    for (auto& v : s.input.data) v = static_cast<float>(rng.uniform());
    s.action = {a, b};
    ds.add(std::move(s), "SIM-LP");
  }
  return ds;
}

}  // namespace

TEST(Matrix, SimRowAverageRoundsHalfUp) {
  const auto m = make_matrix({"SIM"}, {"REAL-IH", "REAL-OH", "SIM-IS", "SIM-LP"}, {{0.1325, 0.4285, 0.0097, 0.0183}});
  EXPECT_NEAR(m.avg[0], 0.14725, 1e-15);
  EXPECT_EQ(format_fixed(m.avg[0], 4), "0.1473");
  const std::string text = to_text(m);
  EXPECT_NE(text.find("REAL-IH"), std::string::npos);
  EXPECT_NE(text.find("AVG"), std::string::npos);
  EXPECT_NE(text.find("0.1473"), std::string::npos);
  const auto j = to_json(m);
  EXPECT_EQ(j["sources"].size(), 4u);
  EXPECT_DOUBLE_EQ(j["rows"][0]["avg"].get<double>(), m.avg[0]);
}

TEST(Matrix, RoundHalfUp) {
  EXPECT_EQ(format_fixed(0.014125, 4), "0.0141");
  EXPECT_EQ(format_fixed(2.675, 2), "2.68");
  EXPECT_EQ(format_fixed(-0.125, 2), "-0.13");
  EXPECT_EQ(format_fixed(9.71, 2), "9.71");
}

TEST(MatrixProperty, AvgColumnIsRowMean) {
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    RandomStream rng(trial, "matrix");
    const std::size_t rows = 1 + rng.below(7), cols = 1 + rng.below(5);
    std::vector<std::string> rn, cn;
    std::vector<std::vector<double>> v(rows);
    for (std::size_t j = 0; j < cols; ++j) cn.push_back("s" + std::to_string(j));
    for (std::size_t i = 0; i < rows; ++i) {
      rn.push_back("r" + std::to_string(i));
      for (std::size_t j = 0; j < cols; ++j) v[i].push_back(rng.uniform(0, 1));
    }
    const auto m = make_matrix(rn, cn, v);
    for (std::size_t i = 0; i < rows; ++i) {
      long double s = 0;
      for (double x : v[i]) s += x;
      EXPECT_NEAR(m.avg[i], static_cast<double>(s / cols), 1e-9);
    }
  }
}

TEST(OfflineMatrix, ConstantPredictorOnConstantSubsetIsZero) {
  auto model = constant_model(0.25f, -0.5f);
  const auto ds = constant_action_set(10, 0.25f, -0.5f, 1);
  const auto other = constant_action_set(6, 0.75f, 0.5f, 2);
  const auto m = offline_matrix({{"CONST", &model}}, {{"A", data::view_of(ds)}, {"B", data::view_of(other)}});
  EXPECT_EQ(m.at("CONST", "A"), 0.0);
  EXPECT_NEAR(m.at("CONST", "B"), (0.25 + 1.0) / 2, 1e-12);
  EXPECT_NEAR(m.avg_of("CONST"), (0.0 + 0.625) / 2, 1e-12);
}

TEST(OfflineMatrix, EmptySubsetNamesSource) {
  auto model = constant_model(0, 0);
  try {
    offline_matrix({{"X", &model}}, {{"PSEUDO-REAL-A", {}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("PSEUDO-REAL-A"), std::string::npos);
  }
}

TEST(Policy, ZeroHeadStandsStill) {
  NetworkPolicy p(constant_model(0, 0));
  const auto map = sim::resolve_map("LOOP");
  sim::RobotState s;
  InputTensor frame;
  for (auto& v : frame.data) v = 0.3f;
  const auto d = p.act({map, s, sim::kDefaultDt, &frame});
  EXPECT_EQ(d.action, (sim::Action{0, 0}));
}

TEST(Policy, OutputsAreClamped) {
  NetworkPolicy p(constant_model(1.4f, -2.0f));
  const auto map = sim::resolve_map("LOOP");
  sim::RobotState s;
  InputTensor frame;
  EXPECT_EQ(p.act({map, s, sim::kDefaultDt, &frame}).action, (sim::Action{1.0, -1.0}));
}

TEST(Policy, RepeatedFrameGivesSameAction) {
  nn::Model<float> m(nn::default_model_config());
  m.init(5);
  NetworkPolicy p(std::move(m));
  const auto map = sim::resolve_map("LOOP");
  sim::RobotState s;
  s.pose = expert::default_start(map);
  const auto frame = render::render_observation(map, s.pose, {}, render::domain_preset("SIM-LP"), 3);
  const auto first = p.act({map, s, sim::kDefaultDt, &frame}).action;
  for (int i = 0; i < 100; ++i) ASSERT_EQ(p.act({map, s, sim::kDefaultDt, &frame}).action, first);
}

TEST(Policy, RejectsWrongShapes) {
  nn::ModelConfig c = small_config();
  c.layers.back() = nn::LayerSpec::fc(3);
  nn::Model<float> three(c);
  EXPECT_THROW(NetworkPolicy{std::move(three)}, Error);
  c = small_config();
  c.input = {3, 16, 64};
  nn::Model<float> small_input(c);
  EXPECT_THROW(NetworkPolicy{std::move(small_input)}, Error);
}

TEST(ClosedLoop, StandingStillIsNoInfraction) {
  const auto map = sim::resolve_map("LOOP");
  FixedPolicy p({0, 0});
  const auto r = closed_loop(p, map, render::domain_preset("SIM-LP"), expert::default_start(map), 15.0);
  EXPECT_EQ(r.tiles, 0.0);
  EXPECT_NEAR(r.survival_s, 15.0, 1e-9);
  EXPECT_FALSE(r.infraction);
}

TEST(ClosedLoop, DrivingIntoTheFloorEndsAtOnce) {
  const auto map = sim::resolve_map("LOOP");
  sim::Pose p = expert::default_start(map);
  // turn toward the near road edge and walk up to 1 mm before it
  for (double turn : {sim::kPi / 2, -sim::kPi / 2}) {
    sim::Pose q = p;
    q.theta = p.theta + turn;
    const sim::Vec2 dir = sim::unit(q.theta);
    double s = 0;
    while (!sim::is_infraction(map, {p.x + (s + 0.001) * dir.x, p.y + (s + 0.001) * dir.y, q.theta})) s += 0.001;
    q.x = p.x + (s - 0.001) * dir.x;
    q.y = p.y + (s - 0.001) * dir.y;
    if (s < 0.5) {
      FixedPolicy full({1, 1});
      const auto r = closed_loop(full, map, render::domain_preset("SIM-LP"), q, 30.0);
      EXPECT_TRUE(r.infraction);
      EXPECT_LE(r.survival_s, 2 * sim::kDefaultDt + 1e-12);
      EXPECT_LT(r.tiles, 0.1);
      return;
    }
  }
  FAIL() << "no road edge within 0.5 m";
}

TEST(ClosedLoop, OffRoadStartRejected) {
  const auto map = sim::resolve_map("LOOP");
  FixedPolicy p({0, 0});
  EXPECT_THROW(closed_loop(p, map, render::domain_preset("SIM-LP"), {0.9, 0.9, 0}, 15.0), Error);
}

TEST(ClosedLoop, ExpertMatchesScoringOracle) {
  const auto map = sim::resolve_map("LOOP");
  expert::ExpertConfig cfg;
  cfg.gains = expert::calibrate_gains(map, {}).gains;
  expert::LaneExpert a(map, cfg), b(map, cfg);
  const auto start = expert::default_start(map);
  ClosedLoopOptions opt;
  opt.seed = 4;
  const auto r = closed_loop(a, map, render::domain_preset("SIM-LP"), start, 15.0, opt);
  const auto ref = expert::score_drive(map, b, start, 15.0, derive_seed(opt.seed, "policy"));
  EXPECT_EQ(r.tiles, ref.tiles);
  EXPECT_FALSE(r.infraction);
  // cruise at 0.7 of 0.6 m/s for 15 s is 10.5 tiles before curve slowdown
  EXPECT_GT(r.tiles, 8.0);
  EXPECT_LT(r.tiles, 10.5 + 1e-9);
}

TEST(ClosedLoopProperty, TraceReplaysToReportedTiles) {
  const auto map = sim::resolve_map("HELDOUT");
  const auto starts = spread_starts(map, 3);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    nn::Model<float> m(nn::default_model_config());
    m.init(100 + i);
    NetworkPolicy p(std::move(m));
    ClosedLoopOptions opt;
    opt.seed = i;
    opt.keep_trace = true;
    const auto r = closed_loop(p, map, render::domain_preset("PSEUDO-REAL-B"), starts[i], 5.0, opt);
    ASSERT_FALSE(r.trace.empty());
    sim::RobotState s;
    s.pose = starts[i];
    for (const auto& row : r.trace) {
      EXPECT_EQ(row.pose.x, s.pose.x);
      s = sim::step_dynamics(s, row.action, opt.dt);
    }
    EXPECT_NEAR(r.tiles, s.path_length / 0.6, 1e-9);
    EXPECT_LE(r.survival_s, 5.0 + 1e-9);
    EXPECT_GE(r.tiles, 0.0);
    if (r.infraction) {
      EXPECT_TRUE(sim::is_infraction(map, s.pose));
    } else {
      EXPECT_EQ(r.trace.size(), 75u);
    }
  }
}

TEST(Trace, CsvLayout) {
  const auto map = sim::resolve_map("LOOP");
  FixedPolicy p({0.5, 0.5});
  ClosedLoopOptions opt;
  opt.keep_trace = true;
  const auto r = closed_loop(p, map, render::domain_preset("SIM-LP"), expert::default_start(map), 1.0, opt);
  const std::string csv = trace_csv(r.trace);
  EXPECT_EQ(csv.rfind("t,x,y,theta,d,phi,v_left,v_right\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), r.trace.size() + 1);
}

TEST(Starts, SpreadStartsAreOnTheRoad) {
  for (const char* name : {"LOOP", "CROSS", "HELDOUT"}) {
    const auto map = sim::resolve_map(name);
    const auto starts = spread_starts(map, 3);
    ASSERT_EQ(starts.size(), 3u);
    for (const auto& s : starts) {
      EXPECT_FALSE(sim::is_infraction(map, s));
      const auto lp = sim::lane_pose(map, s);
      ASSERT_TRUE(lp);
      EXPECT_NEAR(lp->d, 0.0, 1e-9);
    }
    EXPECT_FALSE(starts[0].x == starts[1].x && starts[0].y == starts[1].y);
  }
}

TEST(Suite, TotalsSumScenarioTiles) {
  SuiteReport r;
  r.policies = {"HYBRID"};
  r.scenarios = {"s1", "s2", "s3"};
  r.results = {{{3.10, 15, false, {}}, {3.32, 15, false, {}}, {3.29, 15, false, {}}}};
  EXPECT_NEAR(r.total_tiles("HYBRID"), 9.71, 1e-12);
  EXPECT_NE(to_text(r).find("9.71"), std::string::npos);
}

TEST(Suite, EmptyPolicySet) {
  const auto map = sim::resolve_map("LOOP");
  const std::vector<Scenario> sc{{"a", &map, render::domain_preset("SIM-LP"), expert::default_start(map), 5}};
  const auto r = scenario_suite({}, sc, 1);
  EXPECT_TRUE(r.policies.empty());
  EXPECT_TRUE(r.results.empty());
  EXPECT_EQ(to_json(r)["policies"].size(), 0u);
}

TEST(Suite, DeterministicAndThreadIndependent) {
  const auto map = sim::resolve_map("HELDOUT");
  const auto starts = spread_starts(map, 3);
  std::vector<Scenario> sc;
  for (std::size_t i = 0; i < starts.size(); ++i)
    sc.push_back({"s" + std::to_string(i), &map, render::domain_preset("PSEUDO-REAL-A"), starts[i], 3.0});
  nn::Model<float> base(nn::default_model_config());
  base.init(8);
  const std::vector<NamedPolicy> pols{
      {"NET", [&] { return std::make_unique<NetworkPolicy>(base); }},
      {"FIXED", [] { return std::make_unique<FixedPolicy>(sim::Action{0.6, 0.55}); }}};
  const auto a = scenario_suite(pols, sc, 5, 1);
  const auto b = scenario_suite(pols, sc, 5, 3);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_EQ(to_json(a).dump(), to_json(scenario_suite(pols, sc, 5, 1)).dump());
  double sum = 0;
  for (const auto& x : a.results[1]) sum += x.tiles;
  EXPECT_EQ(a.total_tiles("FIXED"), sum);
}
