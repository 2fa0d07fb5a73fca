#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "juggle/contact.hpp"
#include "juggle/control.hpp"
#include "juggle/dynamics.hpp"

namespace juggle {

/// Raised when the environment API is used out of order.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline constexpr int kActorObsDim = 24;
inline constexpr int kCriticObsDim = 25;
inline constexpr int kActionDim = 4;

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double x) const { return lo <= x && x <= hi; }
};

/// Per-episode randomization of restitution and initial poses. A disabled
/// group falls back to the midpoint of its range (restitution falls back to
/// the nominal sweet/outer model).
struct DomainRandomization {
  Range restitution{0.75, 0.90};
  Range ball_z{1.5, 2.0};
  Range quad_z{0.9, 1.1};
  Range ball_xy{-0.07, 0.07};
  Range quad_xy{-0.07, 0.07};
  bool randomize_restitution = true;
  bool randomize_height = true;
  bool randomize_horizontal = true;
  /// Alternative reading of the hover-height row: randomize the quadrotor's
  /// initial y in `quad_z` and keep its height at 1.0 m.
  bool quad_height_row_is_y = false;

  void validate() const;
};

struct RewardToggles {
  bool r_rpos = true;
  bool r_contact = true;
  bool r_xy = true;
  bool r_smooth = true;
  bool r_spin = true;
};

struct Workspace {
  double xy_limit = 1.5;     // |x|, |y| bound for ball and quadrotor
  double quad_z_min = 0.2;
  double quad_z_max = 3.5;
  double ball_z_max = 6.0;

  void validate() const;
};

struct EnvConfig {
  QuadParams quad;
  BallParams ball;
  RacketGeometry racket;
  RestitutionModel restitution;
  TaskWindows windows;
  DomainRandomization dr;
  RateControllerGains control;
  Workspace workspace;
  RewardToggles rewards;
  double control_hz = 50.0;
  int physics_substeps = 8;
  int max_steps = 500;
  double contact_refractory = 0.01;   // s
  /// A contact earns the hit reward only if the flight arc it ends is the
  /// release drop or climbed to at least z_apex_min. Blocks reward farming by
  /// low dribbles.
  bool hit_credit_requires_live_arc = true;

  void validate() const;
  double controlDt() const { return 1.0 / control_hz; }
  double physicsDt() const { return controlDt() / physics_substeps; }
};

/// Actor view (24 values) plus the privileged normalized timestep.
struct Observation {
  std::array<double, kActorObsDim> actor{};
  double time_fraction = 0.0;

  std::array<double, kCriticObsDim> critic() const;
};

struct RewardInputs {
  double d_xy = 0.0;
  double d_axis = 0.0;
  double d_quad = 0.0;
  double yaw = 0.0;
  double action_delta = 0.0;
  bool hit = false;
  bool apex = false;
};

struct RewardBreakdown {
  double r_hit = 0.0;
  double r_apex = 0.0;
  double r_rpos = 0.0;
  double r_contact = 0.0;
  double r_xy = 0.0;
  double r_smooth = 0.0;
  double r_spin = 0.0;
  double total = 0.0;
};

RewardBreakdown computeReward(const RewardInputs& in, const RewardToggles& toggles = {});

enum class TerminationReason { kNone, kGround, kBallOutOfBounds, kQuadOutOfBounds, kTruncated };

std::string_view toString(TerminationReason reason);

struct EpisodeState {
  int step = 0;
  double time = 0.0;
  int valid_hits = 0;        // hits whose contact and apex both fell in their windows
  int contacts = 0;          // all racket contact events
  int streak = 0;            // current consecutive valid hits
  int max_streak = 0;
  bool release_arc = true;   // ball still on its initial drop
  double arc_peak = 0.0;     // highest ball z since the last contact
  std::optional<bool> pending_hit_valid;  // last hit awaiting its apex
  double episode_return = 0.0;
  std::optional<double> restitution;      // sampled coefficient, if randomized
  RawAction prev_action{};
  TerminationReason reason = TerminationReason::kNone;
  bool done = false;
};

struct StepResult {
  Observation obs;
  RewardBreakdown reward;
  bool terminated = false;
  bool truncated = false;
  TerminationReason reason = TerminationReason::kNone;
  std::vector<HitEvent> hits;
  std::vector<ApexEvent> apexes;
};

/// Initial poses and restitution drawn for one episode.
struct EpisodeInit {
  Eigen::Vector3d quad_position;
  Eigen::Vector3d ball_position;
  std::optional<double> restitution;
};

EpisodeInit sampleEpisodeInit(const EnvConfig& cfg, std::uint64_t seed);

/// Normalized action that makes the vehicle hover at level attitude.
RawAction hoverAction(const EnvConfig& cfg);

/// Single juggling environment.
class JuggleEnv {
 public:
  explicit JuggleEnv(EnvConfig cfg);

  Observation reset(std::uint64_t seed);
  StepResult step(std::span<const double, kActionDim> action);

  const EnvConfig& config() const { return cfg_; }
  const QuadState& quad() const { return quad_; }
  const BallState& ball() const { return ball_; }
  const EpisodeState& episode() const { return episode_; }
  Observation observe() const;

 private:
  void closePendingHit(bool apex_valid);
  TerminationReason checkBounds() const;

  EnvConfig cfg_;
  RestitutionModel restitution_;
  RateController controller_;
  ApexTracker apex_tracker_;
  QuadState quad_;
  BallState ball_;
  EpisodeState episode_;
  double last_contact_time_ = -std::numeric_limits<double>::infinity();
  bool has_reset_ = false;
};

struct EpisodeStats {
  int env_index = 0;
  double episode_return = 0.0;
  int length = 0;
  int max_streak = 0;
  int valid_hits = 0;
  TerminationReason reason = TerminationReason::kNone;
};

/// Batch of auto-resetting environments as seen by a learner. Matrices are
/// column-per-environment.
class BatchEnvironment {
 public:
  virtual ~BatchEnvironment() = default;

  virtual int size() const = 0;
  virtual int observationDim() const = 0;
  virtual int actionDim() const = 0;

  virtual void resetAll() = 0;
  virtual void stepAll(const Eigen::MatrixXd& actions) = 0;

  virtual const Eigen::MatrixXd& observations() const = 0;
  virtual const Eigen::VectorXd& timeFractions() const = 0;
  virtual const Eigen::VectorXd& rewards() const = 0;
  virtual const std::vector<std::uint8_t>& terminated() const = 0;
  virtual const std::vector<std::uint8_t>& truncated() const = 0;
  /// Last observation of an episode that ended on the previous step (before
  /// the auto-reset); only meaningful in columns where an episode ended.
  virtual const Eigen::MatrixXd& finalObservations() const = 0;
  virtual const Eigen::VectorXd& finalTimeFractions() const = 0;

  /// Episodes completed since the last call, in environment order.
  virtual std::vector<EpisodeStats> drainEpisodeStats() = 0;
};

/// Juggling environments with independent seed streams.
class VecEnv : public BatchEnvironment {
 public:
  VecEnv(const EnvConfig& cfg, std::uint64_t root_seed, int num_envs, int workers = 1);
  VecEnv(const EnvConfig& cfg, std::vector<std::uint64_t> env_seeds, int workers = 1);

  int size() const override { return static_cast<int>(envs_.size()); }
  int observationDim() const override { return kActorObsDim; }
  int actionDim() const override { return kActionDim; }

  void resetAll() override;
  void stepAll(const Eigen::MatrixXd& actions) override;

  const Eigen::MatrixXd& observations() const override { return obs_; }
  const Eigen::VectorXd& timeFractions() const override { return time_fraction_; }
  const Eigen::VectorXd& rewards() const override { return rewards_; }
  const std::vector<std::uint8_t>& terminated() const override { return terminated_; }
  const std::vector<std::uint8_t>& truncated() const override { return truncated_; }
  const Eigen::MatrixXd& finalObservations() const override { return final_obs_; }
  const Eigen::VectorXd& finalTimeFractions() const override { return final_time_fraction_; }

  std::vector<EpisodeStats> drainEpisodeStats() override;

  const JuggleEnv& env(int i) const { return envs_[i]; }

 private:
  void stepRange(const Eigen::MatrixXd& actions, int begin, int end);
  void writeObservation(int i, const Observation& obs);

  std::vector<JuggleEnv> envs_;
  std::vector<std::mt19937_64> seed_streams_;
  int workers_;
  Eigen::MatrixXd obs_;
  Eigen::VectorXd time_fraction_;
  Eigen::VectorXd rewards_;
  std::vector<std::uint8_t> terminated_;
  std::vector<std::uint8_t> truncated_;
  Eigen::MatrixXd final_obs_;
  Eigen::VectorXd final_time_fraction_;
  std::vector<std::optional<EpisodeStats>> finished_;
};

/// Independent 64-bit seed for stream `index` of `root`.
std::uint64_t deriveSeed(std::uint64_t root, std::uint64_t index);

}  // namespace juggle
