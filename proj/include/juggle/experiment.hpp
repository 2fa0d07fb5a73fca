#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "juggle/config.hpp"
#include "juggle/report.hpp"

namespace juggle {

struct HitStats {
  double mean = 0.0;
  double std = 0.0;   // population standard deviation
  double median = 0.0;
  int max = 0;
  int min = 0;
};

HitStats summarizeHits(const std::vector<int>& hits);

struct EpisodeOutcome {
  int episode = 0;
  int hits = 0;   // longest run of consecutive valid hits
  int valid_hits = 0;
  int steps = 0;
  double episode_return = 0.0;
  TerminationReason reason = TerminationReason::kNone;
};

struct EvalReport {
  std::string method;
  double release_height = 0.0;
  double ball_mass = 0.0;
  std::vector<EpisodeOutcome> episodes;
  HitStats stats;
  double wall_seconds = 0.0;
  std::string config_hash;

  std::vector<int> hits() const;
};

/// One control tick of a recorded episode.
struct TrajectoryRow {
  double t = 0.0;
  QuadState quad;
  BallState ball;
  RawAction action{};
  RewardBreakdown reward;
  std::string event;
};

void writeTrajectoryCsv(std::ostream& out, const std::vector<TrajectoryRow>& rows);
void writeEvalCsv(std::ostream& out, const EvalReport& report);

/// Environment used for evaluation: fixed release height, one-minute cap and,
/// when configured, nominal restitution.
EnvConfig evalEnvConfig(const ScenarioConfig& cfg, double release_height,
                        std::optional<double> ball_mass = std::nullopt);

/// Seeds of the evaluation episodes; shared by every method.
std::uint64_t evalEpisodeSeed(std::uint64_t root, int episode);

/// Deterministic policy rollouts, batched over episodes. Episode 0 is recorded
/// into `trajectory` when given.
EvalReport evaluatePolicy(const PolicySnapshot& policy, const EnvConfig& env_cfg, int episodes,
                          std::uint64_t seed, std::vector<TrajectoryRow>* trajectory = nullptr);
EvalReport evaluateMbpp(const MbppConfig& mbpp, const EnvConfig& env_cfg, int episodes, std::uint64_t seed,
                        std::vector<TrajectoryRow>* trajectory = nullptr);

/// Randomly initialized actor, used as the untrained reference.
PolicySnapshot randomPolicy(const ScenarioConfig& cfg, std::uint64_t seed);

struct TrainOptions {
  std::filesystem::path out_dir;
  bool deterministic = false;
  std::optional<std::filesystem::path> resume;
  std::function<void(const IterationStats&, double wall_seconds)> on_iteration;
};

struct TrainResult {
  PolicySnapshot snapshot;
  std::vector<IterationStats> curve;
  double wall_seconds = 0.0;
};

/// Runs PPO for train.total_frames frames. Writes checkpoint.ckpt (refreshed
/// every train.checkpoint_every iterations), training_curve.csv/.svg,
/// eval_curve.csv (deterministic evaluation every train.eval_every iterations
/// and at the end) and config.resolved.json into out_dir.
TrainResult runTraining(const ScenarioConfig& cfg, const TrainOptions& opts);

struct SweepRow {
  double height = 0.0;
  std::string method;
  HitStats stats;
};

void writeSweepCsv(std::ostream& out, const std::vector<SweepRow>& rows);
PlotSpec sweepPlot(const std::vector<SweepRow>& rows, const std::string& title);

/// Both methods over the same heights, episode seeds and episode counts.
std::vector<SweepRow> runCompare(const ScenarioConfig& cfg, const PolicySnapshot* policy, bool include_mbpp);

struct AblationRow {
  std::string variant;   // "full" or the disabled component
  std::string changed;   // config field that differs from the full variant
  HitStats stats;        // at eval.release_height
  double sweep_mean = 0.0;  // mean hits averaged over compare.heights
};

/// Trains one variant per toggle plus the full configuration with shared seed
/// and budget, then evaluates each. Rows are ranked by mean hits.
std::vector<AblationRow> runAblation(const ScenarioConfig& cfg, const std::vector<std::string>& toggles,
                                     const std::filesystem::path& out_dir, bool deterministic);
void writeAblationCsv(std::ostream& out, const std::vector<AblationRow>& rows);

struct PhysicsCheck {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Hover drift, ballistic error, bounce apex ratio and quaternion norm drift.
std::vector<PhysicsCheck> runPhysicsChecks(const EnvConfig& cfg);

}  // namespace juggle
