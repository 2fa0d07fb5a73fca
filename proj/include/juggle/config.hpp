#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "juggle/env.hpp"
#include "juggle/lcp.hpp"
#include "juggle/mbpp.hpp"
#include "juggle/ppo.hpp"

namespace juggle {

struct TrainSettings {
  int num_envs = 1024;
  std::uint64_t total_frames = 200'000'000;
  int workers = 0;             // 0: one per hardware thread
  int checkpoint_every = 50;   // iterations between checkpoint refreshes
  int eval_every = 100;        // iterations between deterministic evaluations, 0 disables
  int iterations(int rollout_length) const;
};

struct EvalSettings {
  int episodes = 100;
  int max_steps = 3000;        // one minute at 50 Hz
  double release_height = 1.75;
  /// Evaluate with the nominal sweet/outer restitution instead of a sampled one.
  bool nominal_restitution = true;
};

struct CompareSettings {
  std::vector<double> heights{1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5};
  int episodes = 100;
};

struct AblateSettings {
  std::vector<std::string> toggles{"r_xy", "r_spin", "r_rpos", "r_contact", "r_smooth",
                                   "DR-hpos", "DR-rest", "DR-height"};
  std::uint64_t total_frames = 20'000'000;  // per variant
  int episodes = 20;
};

struct GeneralizeSettings {
  double ball_mass = 0.005;
};

/// Everything a run depends on. Serialized as one JSON document.
struct ScenarioConfig {
  std::string preset = "desk";
  std::uint64_t seed = 1;
  EnvConfig env;
  PpoConfig ppo;
  MbppConfig mbpp;
  TrainSettings train;
  EvalSettings eval;
  CompareSettings compare;
  AblateSettings ablate;
  GeneralizeSettings generalize;
  lcp::LatencyBenchConfig latency;

  void validate() const;
};

std::vector<std::string> presetNames();
/// Throws ConfigError for an unknown name.
ScenarioConfig makePreset(std::string_view name);

/// Canonical JSON text (two-space indent, fixed key order).
std::string toJson(const ScenarioConfig& cfg);
/// Every key is optional and defaults to the named preset (or "desk"); unknown
/// keys and type mismatches raise ConfigError naming the field path.
ScenarioConfig configFromJson(std::string_view text);
ScenarioConfig loadConfig(const std::filesystem::path& path);
void saveConfig(const ScenarioConfig& cfg, const std::filesystem::path& path);

/// 64-bit FNV-1a of the canonical JSON.
std::uint64_t configHash(const ScenarioConfig& cfg);
std::string hashHex(std::uint64_t h);

/// Dotted paths of leaf fields whose values differ.
std::vector<std::string> configDiff(const ScenarioConfig& a, const ScenarioConfig& b);

/// Names accepted by applyToggle.
const std::vector<std::string>& ablationToggleNames();
/// Disables one reward term or randomization group. Throws ConfigError for an
/// unknown name.
void applyToggle(ScenarioConfig& cfg, std::string_view name);

}  // namespace juggle
