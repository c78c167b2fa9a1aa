#include <gtest/gtest.h>

#include <string>

#include "laneil/config/config.hpp"

using namespace laneil;
using config::json;

namespace {

ErrorKind kind_of(const std::string& text) {
  try {
    config::parse(text);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Runtime;  // parsed fine
}

std::string message_of(const std::string& text) {
  try {
    config::parse(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, SeedIsMandatory) {
  EXPECT_EQ(kind_of("{}"), ErrorKind::Config);
  EXPECT_NE(message_of("{}").find("seed"), std::string::npos);
  EXPECT_EQ(kind_of(R"({"train": {"epochs": 3}})"), ErrorKind::Config);
}

TEST(Config, DefaultsApply) {
  const auto c = config::parse(R"({"seed": 9})");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.collect.frames, 2000u);
  EXPECT_EQ(c.collect.sources.size(), 4u);
  EXPECT_EQ(c.train.epochs, 50u);
  EXPECT_EQ(c.train.batch, 64u);
  EXPECT_EQ(c.train.seeds, 5u);
  EXPECT_DOUBLE_EQ(c.train.val_fraction, 0.3);
  EXPECT_EQ(c.train.recipes.size(), 7u);
  EXPECT_EQ(c.recipe("HYBRID").sources.size(), 4u);
  EXPECT_EQ(c.eval.map, "HELDOUT");
  EXPECT_EQ(c.eval.scenarios, 3u);
  EXPECT_DOUBLE_EQ(c.eval.time_limit, 30.0);
  EXPECT_FALSE(c.expert.gains.has_value());
  EXPECT_EQ(c.domains.size(), 4u);
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  for (const char* text : {R"({"seed": 1, "sedd": 2})", R"({"seed": 1, "train": {"epoch": 3}})",
                           R"({"seed": 1, "expert": {"perturb": {"rates": 1}}})",
                           R"({"seed": 1, "domains": {"SIM-LP": {"palette": {"grass": [0, 0, 0]}}}})",
                           R"({"seed": 1, "train": {"recipes": [{"name": "X", "sources": ["SIM-LP"], "w": 1}]}})"}) {
    EXPECT_EQ(kind_of(text), ErrorKind::Config) << text;
  }
  EXPECT_NE(message_of(R"({"seed": 1, "train": {"epoch": 3}})").find("train.epoch"), std::string::npos);
}

TEST(Config, BadValuesRejected) {
  for (const char* text : {R"({"seed": 1, "train": {"batch": 1}})", R"({"seed": 1, "train": {"val_fraction": 1.0}})",
                           R"({"seed": 1, "train": {"epochs": "ten"}})", R"({"seed": -1})", R"({"seed": 1, "train": {"epochs": 2.5}})",
                           R"({"seed": 1, "sim": {"dt": 0}})", R"({"seed": 1, "expert": {"v_nominal": 1.5}})",
                           R"({"seed": 1, "expert": {"gains": {"kp": -1, "kd": 1}}})",
                           R"({"seed": 1, "domains": {"SIM-LP": {"noise_sigma": -2}}})",
                           R"({"seed": 1, "eval": {"domains": ["MARS"]}})",
                           R"({"seed": 1, "eval": {"policies": ["NOPE"]}})", "{not json"}) {
    EXPECT_EQ(kind_of(text), ErrorKind::Config) << text;
  }
}

TEST(Config, RecipesMustUseCollectedSources) {
  const char* text = R"({"seed": 1,
    "collect": {"sources": [{"map": "LOOP", "domain": "SIM-LP"}]},
    "train": {"recipes": [{"name": "R", "sources": ["SIM-LP", "SIM-IS"]}]},
    "eval": {"policies": ["EXPERT"]}})";
  EXPECT_EQ(kind_of(text), ErrorKind::Config);
  EXPECT_NE(message_of(text).find("SIM-IS"), std::string::npos);
  EXPECT_EQ(kind_of(R"({"seed": 1, "collect": {"sources": [{"map": "LOOP", "domain": "SIM-LP"},
                                                          {"map": "CROSS", "domain": "SIM-LP"}]}})"),
            ErrorKind::Config);
}

TEST(Config, DomainOverridesMergeIntoPresets) {
  const auto c = config::parse(R"({"seed": 1, "domains": {"PSEUDO-REAL-B": {"noise_sigma": 3.5, "lighting_gain": 0.8}}})");
  const auto& d = c.domain("PSEUDO-REAL-B");
  EXPECT_DOUBLE_EQ(d.noise_sigma, 3.5);
  EXPECT_DOUBLE_EQ(d.lighting_gain, 0.8);
  const auto preset = render::domain_presets();
  EXPECT_EQ(d.clutter_count, preset[3].clutter_count);
  EXPECT_DOUBLE_EQ(c.domain("SIM-LP").noise_sigma, preset[0].noise_sigma);
}

TEST(Config, EchoRoundTrips) {
  const auto c = config::parse(R"({"seed": 42, "train": {"epochs": 7, "lr": 0.002},
    "expert": {"gains": {"kp": 12, "kd": 3}}, "domains": {"SIM-IS": {"dash_gap": 0.05}}})");
  const json echo = config::to_json(c);
  const auto back = config::from_json(echo);
  EXPECT_EQ(config::to_json(back), echo);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.train.epochs, 7u);
  EXPECT_FLOAT_EQ(back.train.adam.lr, 0.002f);
  ASSERT_TRUE(back.expert.gains.has_value());
  EXPECT_DOUBLE_EQ(back.expert.gains->kp, 12.0);
  EXPECT_DOUBLE_EQ(back.domain("SIM-IS").dash_gap, 0.05);
}

TEST(Config, EchoOfDefaultsRoundTrips) {
  const json echo = config::to_json(config::parse(R"({"seed": 3})"));
  EXPECT_EQ(config::to_json(config::from_json(echo)), echo);
}

TEST(Config, StageSeedsDiffer) {
  const auto c = config::parse(R"({"seed": 3})");
  EXPECT_NE(c.stage_seed("collect", 0), c.stage_seed("collect", 1));
  EXPECT_NE(c.stage_seed("collect", 0), c.stage_seed("split", 0));
  EXPECT_EQ(c.stage_seed("train"), c.stage_seed("train"));
}

TEST(Config, MissingFileIsConfigError) {
  try {
    config::load("/nonexistent/run.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}
