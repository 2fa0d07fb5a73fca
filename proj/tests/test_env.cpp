#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "juggle/env.hpp"
#include "juggle/mbpp.hpp"

using namespace juggle;

namespace {

EnvConfig centredConfig() {
  EnvConfig c;
  c.dr.randomize_height = false;
  c.dr.randomize_horizontal = false;
  c.dr.randomize_restitution = false;
  return c;
}

RawAction randomAction(std::mt19937_64& rng, const RawAction& centre, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  RawAction a = centre;
  for (double& x : a) x = std::clamp(x + u(rng), -1.0, 1.0);
  return a;
}

}  // namespace

TEST_SUITE("env") {

TEST_CASE("reward for a centred hit") {
  RewardInputs in;
  in.hit = true;
  const RewardBreakdown r = computeReward(in);
  CHECK(r.r_hit == 50.0);
  CHECK(r.r_apex == 0.0);
  CHECK(std::abs(r.r_rpos - 1.0 / 1.2) < 1e-9);
  CHECK(r.r_contact == 10.0);
  CHECK(r.r_xy == 0.0);
  CHECK(r.r_smooth == 2.0);
  CHECK(r.r_spin == 0.0);
  CHECK(std::abs(r.total - (62.0 + 1.0 / 1.2)) < 1e-9);
  CHECK(std::abs(r.total - 62.8333) < 1e-4);
}

TEST_CASE("shaping-only reward") {
  RewardInputs in;
  in.d_xy = 1.0;
  in.d_quad = 0.5;
  in.yaw = 0.1;
  in.action_delta = 0.3;
  const RewardBreakdown r = computeReward(in);
  CHECK(std::abs(r.total - (0.5 - 0.5 + 2.0 * std::exp(-0.3) - 1.0)) < 1e-9);
  CHECK(std::abs(r.total - 0.4816) < 1e-4);
}

TEST_CASE("radial reward saturates inside 0.2 m") {
  RewardInputs in;
  in.d_xy = 0.1;
  CHECK(std::abs(computeReward(in).r_rpos - 1.0 / 1.2) < 1e-9);
  in.d_xy = 0.0;
  CHECK(std::abs(computeReward(in).r_rpos - 1.0 / 1.2) < 1e-9);
}

TEST_CASE("each toggle removes exactly one term") {
  RewardInputs in;
  in.hit = true;
  in.apex = true;
  in.d_xy = 0.4;
  in.d_axis = 0.03;
  in.d_quad = 0.2;
  in.yaw = -0.05;
  in.action_delta = 0.2;
  const RewardBreakdown full = computeReward(in);
  auto check = [&](bool RewardToggles::*flag, double RewardBreakdown::*term) {
    RewardToggles t;
    t.*flag = false;
    const RewardBreakdown r = computeReward(in, t);
    CHECK(r.*term == 0.0);
    CHECK(r.total == doctest::Approx(full.total - full.*term).epsilon(1e-14));
  };
  check(&RewardToggles::r_rpos, &RewardBreakdown::r_rpos);
  check(&RewardToggles::r_contact, &RewardBreakdown::r_contact);
  check(&RewardToggles::r_xy, &RewardBreakdown::r_xy);
  check(&RewardToggles::r_smooth, &RewardBreakdown::r_smooth);
  check(&RewardToggles::r_spin, &RewardBreakdown::r_spin);
}

TEST_CASE("reward terms stay in range and sum exactly") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 10000; ++k) {
    RewardInputs in;
    in.d_xy = 3 * u(rng);
    in.d_axis = 0.1 * u(rng);
    in.d_quad = 2 * u(rng);
    in.yaw = 6 * u(rng) - 3;
    in.action_delta = 4 * u(rng);
    in.hit = u(rng) < 0.5;
    in.apex = u(rng) < 0.5;
    const RewardBreakdown r = computeReward(in);
    REQUIRE(r.r_rpos > 0.0);
    REQUIRE(r.r_rpos <= 1.0 / 1.2);
    REQUIRE(r.r_contact >= 0.0);
    REQUIRE(r.r_contact <= 10.0);
    REQUIRE((r.r_contact == 0.0 || in.hit));
    REQUIRE(r.r_smooth > 0.0);
    REQUIRE(r.r_smooth <= 2.0);
    REQUIRE((r.r_hit == 0.0 || r.r_hit == 50.0));
    REQUIRE((r.r_apex == 0.0 || r.r_apex == 50.0));
    REQUIRE(r.total == r.r_hit + r.r_apex + r.r_rpos + r.r_contact + r.r_xy + r.r_smooth + r.r_spin);
  }
}

TEST_CASE("reset is a pure function of the seed") {
  JuggleEnv a(EnvConfig{}), b(EnvConfig{});
  const Observation oa = a.reset(77);
  const Observation ob = b.reset(77);
  CHECK(oa.actor == ob.actor);
  CHECK(a.episode().restitution == b.episode().restitution);
}

TEST_CASE("randomized initial conditions stay in their ranges") {
  const EnvConfig cfg;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const EpisodeInit init = sampleEpisodeInit(cfg, deriveSeed(9, s));
    REQUIRE(init.restitution.has_value());
    REQUIRE(cfg.dr.restitution.contains(*init.restitution));
    REQUIRE(cfg.dr.ball_z.contains(init.ball_position.z()));
    REQUIRE(cfg.dr.quad_z.contains(init.quad_position.z()));
    REQUIRE(cfg.dr.ball_xy.contains(init.ball_position.x()));
    REQUIRE(cfg.dr.quad_xy.contains(init.quad_position.y()));
  }
}

TEST_CASE("disabled randomization uses range midpoints") {
  const EpisodeInit init = sampleEpisodeInit(centredConfig(), 5);
  CHECK((init.ball_position - Eigen::Vector3d(0, 0, 1.75)).norm() < 1e-15);
  CHECK((init.quad_position - Eigen::Vector3d(0, 0, 1.0)).norm() < 1e-15);
  CHECK_FALSE(init.restitution.has_value());
}

TEST_CASE("alternative hover-row reading") {
  EnvConfig c;
  c.dr.quad_height_row_is_y = true;
  const EpisodeInit init = sampleEpisodeInit(c, 12);
  CHECK(init.quad_position.z() == 1.0);
  CHECK(init.quad_position.y() > 0.8);
}

TEST_CASE("observation layout") {
  JuggleEnv env(centredConfig());
  const Observation o = env.reset(1);
  CHECK(o.actor.size() == 24);
  CHECK(o.critic().size() == 25);
  CHECK(o.actor[2] == 1.0);
  CHECK(o.actor[3] == 1.0);   // R(0,0) at level attitude
  CHECK(o.actor[17] == 1.75);
  CHECK(o.actor[23] == doctest::Approx(0.75));
  CHECK(o.critic()[24] == 0.0);
  env.step(hoverAction(env.config()));
  CHECK(env.observe().critic()[24] == doctest::Approx(1.0 / 500.0));
}

TEST_CASE("one hover step without contact") {
  JuggleEnv env(centredConfig());
  env.reset(1);
  const StepResult r = env.step(hoverAction(env.config()));
  CHECK(r.hits.empty());
  CHECK(r.reward.r_hit == 0.0);
  CHECK(r.reward.r_apex == 0.0);
  CHECK(r.reward.r_contact == 0.0);
  CHECK_FALSE(r.terminated);
}

TEST_CASE("ball dropped beside the racket hits the ground") {
  EnvConfig c = centredConfig();
  c.dr.quad_xy = {0.5, 0.5};
  JuggleEnv env(c);
  env.reset(1);
  StepResult r;
  int steps = 0;
  do {
    r = env.step(hoverAction(c));
    ++steps;
  } while (!r.terminated && !r.truncated);
  CHECK(r.terminated);
  CHECK((r.reason == TerminationReason::kGround));
  CHECK(env.ball().position.z() <= c.ball.radius);
  CHECK(steps < 40);
  CHECK_THROWS_AS(env.step(hoverAction(c)), UsageError);
}

TEST_CASE("hovering under the ball lasts to the step cap and credits only the release drop") {
  const EnvConfig c = centredConfig();
  JuggleEnv env(c);
  env.reset(1);
  int credited = 0, contacts = 0;
  StepResult r;
  do {
    r = env.step(hoverAction(c));
    for (const auto& h : r.hits) {
      ++contacts;
      credited += h.credited;
    }
  } while (!r.terminated && !r.truncated);
  CHECK(r.truncated);
  CHECK((r.reason == TerminationReason::kTruncated));
  CHECK(env.episode().step == 500);
  CHECK(contacts > 3);
  CHECK(credited == 1);
  CHECK(env.episode().max_streak == 0);
}

TEST_CASE("step before reset is a usage error") {
  JuggleEnv env(EnvConfig{});
  CHECK_THROWS_AS(env.step(RawAction{}), UsageError);
}

TEST_CASE("fixed seed and actions reproduce the trajectory bitwise") {
  auto run = [] {
    JuggleEnv env(EnvConfig{});
    env.reset(42);
    std::mt19937_64 rng(1);
    std::vector<double> trace;
    for (int i = 0; i < 300; ++i) {
      const StepResult r = env.step(randomAction(rng, hoverAction(env.config()), 0.05));
      trace.push_back(r.reward.total);
      trace.insert(trace.end(), r.obs.actor.begin(), r.obs.actor.end());
      if (r.terminated || r.truncated) break;
    }
    return trace;
  };
  CHECK(run() == run());
}

TEST_CASE("streak counter agrees with the event log") {
  EnvConfig c = centredConfig();
  c.dr.ball_z = {4.25, 4.25};
  c.max_steps = 3000;
  JuggleEnv env(c);
  MbppAgent agent(MbppConfig{}, c);
  for (std::uint64_t seed : {1, 2, 3}) {
    env.reset(seed);
    agent.reset(seed);
    struct Ev {
      double t;
      bool is_hit;
      bool valid;
    };
    std::vector<Ev> events;
    bool seen_contact = false;
    StepResult r;
    do {
      r = env.step(agent.act(env));
      if (r.reward.r_apex > 0.0) REQUIRE((seen_contact || !r.hits.empty()));
      for (const auto& h : r.hits) events.push_back({h.time, true, h.hit_valid});
      for (const auto& a : r.apexes) events.push_back({a.time, false, a.apex_valid});
      seen_contact = seen_contact || !r.hits.empty();
    } while (!r.terminated && !r.truncated);
    std::stable_sort(events.begin(), events.end(), [](const Ev& a, const Ev& b) { return a.t < b.t; });
    int streak = 0, best = 0, valid = 0;
    std::optional<bool> pending;
    for (const auto& e : events) {
      if (e.is_hit) {
        if (pending) streak = 0;
        pending = e.valid;
      } else if (pending) {
        if (*pending && e.valid) {
          best = std::max(best, ++streak);
          ++valid;
        } else {
          streak = 0;
        }
        pending.reset();
      }
    }
    CHECK(env.episode().max_streak == best);
    CHECK(env.episode().valid_hits == valid);
  }
}

TEST_CASE("single-env batch matches a bare environment") {
  const EnvConfig c;
  VecEnv venv(c, std::vector<std::uint64_t>{123}, 1);
  venv.resetAll();
  JuggleEnv env(c);
  std::mt19937_64 episode_seeds(123);
  Observation o = env.reset(episode_seeds());
  std::mt19937_64 rng(6);
  for (int i = 0; i < 200; ++i) {
    for (int d = 0; d < kActorObsDim; ++d) REQUIRE(venv.observations()(d, 0) == o.actor[d]);
    const RawAction a = randomAction(rng, hoverAction(c), 0.2);
    Eigen::MatrixXd am(kActionDim, 1);
    for (int d = 0; d < kActionDim; ++d) am(d, 0) = a[d];
    venv.stepAll(am);
    const StepResult r = env.step(a);
    REQUIRE(venv.rewards()[0] == r.reward.total);
    o = r.obs;
    if (r.terminated || r.truncated) o = env.reset(episode_seeds());
  }
}

TEST_CASE("permuting environments permutes results") {
  const EnvConfig c;
  const std::vector<std::uint64_t> seeds{11, 22, 33, 44};
  const std::vector<int> perm{2, 0, 3, 1};
  std::vector<std::uint64_t> permuted(4);
  for (int i = 0; i < 4; ++i) permuted[i] = seeds[perm[i]];
  VecEnv a(c, seeds, 1), b(c, permuted, 2);
  a.resetAll();
  b.resetAll();
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 0.2);
  for (int t = 0; t < 150; ++t) {
    Eigen::MatrixXd act(kActionDim, 4);
    for (int i = 0; i < 4; ++i)
      for (int d = 0; d < kActionDim; ++d) act(d, i) = hoverAction(c)[d] + n(rng);
    Eigen::MatrixXd act_b(kActionDim, 4);
    for (int i = 0; i < 4; ++i) act_b.col(i) = act.col(perm[i]);
    a.stepAll(act);
    b.stepAll(act_b);
    for (int i = 0; i < 4; ++i) {
      REQUIRE(b.rewards()[i] == a.rewards()[perm[i]]);
      REQUIRE(b.observations().col(i) == a.observations().col(perm[i]));
      REQUIRE(b.terminated()[i] == a.terminated()[perm[i]]);
    }
  }
}

TEST_CASE("configuration validation") {
  EnvConfig c;
  c.max_steps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = EnvConfig{};
  c.dr.ball_z = {2.0, 1.5};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(VecEnv(EnvConfig{}, 1, 0), ConfigError);
}

}  // TEST_SUITE
