#include <filesystem>
#include <set>
#include <string>

#include "doctest.h"
#include "juggle/config.hpp"

using namespace juggle;

namespace {

std::string errorText(std::string_view json) {
  try {
    configFromJson(json);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("every preset validates and survives a JSON round trip") {
  for (const std::string& name : presetNames()) {
    CAPTURE(name);
    const ScenarioConfig c = makePreset(name);
    CHECK_NOTHROW(c.validate());
    const ScenarioConfig back = configFromJson(toJson(c));
    CHECK(toJson(back) == toJson(c));
    CHECK(configHash(back) == configHash(c));
    CHECK(configDiff(back, c).empty());
  }
  CHECK_THROWS_AS(makePreset("bogus"), ConfigError);
}

TEST_CASE("empty document is the desk preset") {
  CHECK(toJson(configFromJson("{}")) == toJson(makePreset("desk")));
  CHECK(toJson(configFromJson(R"({"preset": "smoke"})")) == toJson(makePreset("smoke")));
}

TEST_CASE("partial documents override one field") {
  const ScenarioConfig c = configFromJson(R"({"ball": {"mass": 0.005}})");
  CHECK(c.env.ball.mass == 0.005);
  const std::vector<std::string> diff = configDiff(makePreset("desk"), c);
  REQUIRE(diff.size() == 1);
  CHECK(diff[0] == "ball.mass");
}

TEST_CASE("unknown keys name their path") {
  const std::string e = errorText(R"({"ball": {"mas": 1.0}})");
  CHECK(e.find("ball.mas") != std::string::npos);
  CHECK(errorText(R"({"nonsense": 1})").find("nonsense") != std::string::npos);
}

TEST_CASE("type mismatches name their path") {
  CHECK(errorText(R"({"seed": "seven"})").find("seed") != std::string::npos);
  CHECK(errorText(R"({"ppo": {"hidden": [64, "x"]}})").find("ppo.hidden") != std::string::npos);
  CHECK_FALSE(errorText("{not json").empty());
}

TEST_CASE("out-of-range values are rejected at load") {
  CHECK_FALSE(errorText(R"({"ball": {"mass": -1.0}})").empty());
  CHECK_FALSE(errorText(R"({"ppo": {"gamma": 1.5}})").empty());
  CHECK_FALSE(errorText(R"({"dr": {"restitution": [0.9, 0.7]}})").empty());
}

TEST_CASE("hash tracks content") {
  const ScenarioConfig a = makePreset("desk");
  ScenarioConfig b = a;
  CHECK(configHash(a) == configHash(b));
  b.env.ball.mass = 0.005;
  CHECK(configHash(a) != configHash(b));
  CHECK(hashHex(configHash(a)).size() == 16);
}

TEST_CASE("each ablation toggle changes exactly one field") {
  const ScenarioConfig base = makePreset("desk");
  std::set<std::string> touched;
  for (const std::string& name : ablationToggleNames()) {
    CAPTURE(name);
    ScenarioConfig c = base;
    applyToggle(c, name);
    const std::vector<std::string> diff = configDiff(base, c);
    REQUIRE(diff.size() == 1);
    touched.insert(diff[0]);
  }
  CHECK(touched.size() == ablationToggleNames().size());
  ScenarioConfig c = base;
  CHECK_THROWS_AS(applyToggle(c, "r_nothing"), ConfigError);
}

TEST_CASE("save and load through a file") {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "juggle_config_test" / "nested";
  std::filesystem::remove_all(dir.parent_path());
  ScenarioConfig c = makePreset("real-analog");
  c.seed = 77;
  saveConfig(c, dir / "cfg.json");
  const ScenarioConfig back = loadConfig(dir / "cfg.json");
  CHECK(back.seed == 77);
  CHECK(toJson(back) == toJson(c));
  std::filesystem::remove_all(dir.parent_path());
  CHECK_THROWS_AS(loadConfig(dir / "missing.json"), ConfigError);
}

TEST_CASE("frame budget is a cap") {
  TrainSettings t;
  t.num_envs = 1024;
  t.total_frames = 200'000'000;
  CHECK(t.iterations(64) == 3051);
  CHECK(static_cast<std::uint64_t>(t.iterations(64)) * 1024 * 64 <= t.total_frames);
  t.total_frames = 10;
  CHECK(t.iterations(64) == 1);
}

TEST_CASE("presets carry their documented differences") {
  CHECK(makePreset("desk").train.num_envs == 1024);
  CHECK(makePreset("desk").train.total_frames <= 200'000'000u);
  CHECK(makePreset("full").train.total_frames == 2'000'000'000u);
  CHECK(makePreset("paper-sim").env.racket.disc_radius == makePreset("paper-sim").env.racket.sweet_radius);
  CHECK(makePreset("real-analog").env.windows.z_apex_min == 1.6);
  CHECK(makePreset("desk").eval.max_steps == 3000);
  CHECK(makePreset("desk").env.max_steps == 500);
}

}  // TEST_SUITE
