#pragma once

#include <array>
#include <optional>
#include <random>
#include <vector>

#include "juggle/contact.hpp"
#include "juggle/control.hpp"
#include "juggle/dynamics.hpp"
#include "juggle/env.hpp"

namespace juggle {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

struct BallFilterConfig {
  double process_noise = 0.5;         // white acceleration density, m/s^2
  double measurement_noise = 0.002;   // position std, m
  double initial_velocity_std = 3.0;  // m/s
  double innovation_gate = 0.05;      // m; larger innovations restart the track

  void validate() const;
};

/// Linear Kalman filter on ball position and velocity with a gravity-driven
/// constant-acceleration process model and position measurements.
class BallFilter {
 public:
  explicit BallFilter(BallFilterConfig cfg = {});

  void initialize(const Eigen::Vector3d& position);
  bool initialized() const { return initialized_; }

  void predict(double dt);
  /// Returns false when the innovation exceeded the gate and the track was
  /// restarted from this measurement.
  bool update(const Eigen::Vector3d& measurement);
  /// Predict by dt, then update if a measurement is present.
  bool step(const std::optional<Eigen::Vector3d>& measurement, double dt);

  const Vector6d& state() const { return x_; }
  const Matrix6d& covariance() const { return P_; }
  Eigen::Vector3d position() const { return x_.head<3>(); }
  Eigen::Vector3d velocity() const { return x_.tail<3>(); }
  BallState ballState() const { return {position(), velocity()}; }
  /// Time since the track was (re)started.
  double trackAge() const { return age_; }
  int restarts() const { return restarts_; }
  int covarianceResets() const { return covariance_resets_; }

 private:
  BallFilterConfig cfg_;
  Vector6d x_ = Vector6d::Zero();
  Matrix6d P_ = Matrix6d::Identity();
  double age_ = 0.0;
  int updates_ = 0;
  bool initialized_ = false;
  int restarts_ = 0;
  int covariance_resets_ = 0;
};

/// Forward rollout of the ball model (RK4), samples spaced by dt including the
/// initial state.
std::vector<BallState> predictBall(const BallState& start, const BallParams& params, double horizon, double dt);

struct HeightCrossing {
  double time = 0.0;
  BallState state;
};

/// First time the ball passes height z while descending, refined by
/// bisection on the integrator step. Empty if not reached within the horizon.
std::optional<HeightCrossing> timeToHeight(const BallState& start, const BallParams& params, double z,
                                           double horizon, double dt = 1.0 / 400.0);

/// Apex height of the current flight (current z if already descending).
double apexHeight(const BallState& start, const BallParams& params, double dt = 1.0 / 400.0);

/// Launch speed at z_from that reaches apex z_to, closed form without drag,
/// bisection on the rollout with drag.
double requiredLaunchSpeed(double z_from, double z_to, const BallParams& params);

/// Racket normal speed that turns an incoming normal speed into the desired
/// outgoing one under coefficient e (all signed along the normal).
double invertRestitution(double v_out, double v_in, double e);

/// Minimum-jerk quintic on one axis over [0, T].
struct Quintic {
  std::array<double, 6> c{};
  double duration = 0.0;

  static Quintic solve(double p0, double v0, double a0, double p1, double v1, double a1, double T);
  double position(double t) const;
  double velocity(double t) const;
  double acceleration(double t) const;
};

struct MbppConfig {
  double hit_height = 1.1;       // ball centre height at impact, m
  double target_apex = 3.0;      // m
  double e_assumed = 0.82;
  double accel_margin = 0.8;     // fraction of the thrust-limited acceleration
  double freeze_time = 0.3;      // s before impact after which the plan is frozen
  double min_track_time = 0.55;  // s of tracking before a plan is committed
  double horizon = 3.0;          // prediction horizon, s
  double ready_height = 1.0;     // hover height between strikes, m
  double ready_track_time = 0.1;  // s of tracking before the ready pose follows the predicted crossing
  double lateral_position_gain = 6.0;    // 1/s^2
  double lateral_velocity_gain = 4.0;    // 1/s
  double vertical_position_gain = 16.0;  // 1/s^2
  double vertical_velocity_gain = 8.0;   // 1/s
  double attitude_gain = 6.0;            // 1/s
  double lateral_settle_time = 0.35;  // s; lateral approach ends this long before impact
  double feedforward_lead = 0.05;  // s; acceleration feedforward is sampled this far ahead
  bool level_at_impact = true;   // drop lateral feedback once the plan is frozen
  double measurement_noise = 0.002;  // std of simulated ball position measurements, m
  BallFilterConfig filter;

  void validate() const;
};

struct ReferencePoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d acceleration = Eigen::Vector3d::Zero();
};

struct InterceptionPlan {
  double t0 = 0.0;
  double t_hit = 0.0;
  Eigen::Vector3d hit_point = Eigen::Vector3d::Zero();        // ball centre at impact
  Eigen::Vector3d ball_velocity_in = Eigen::Vector3d::Zero();
  Eigen::Vector3d racket_velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d racket_normal = Eigen::Vector3d::UnitZ();
  std::array<Quintic, 3> axes;   // quadrotor body origin
  double peak_accel = 0.0;
  double accel_limit = 0.0;
  bool feasible = false;

  /// Reference at absolute time t, clamped to [t0, t_hit].
  ReferencePoint reference(double t) const;
};

enum class PlanStatus { kOk, kNoCrossing, kInfeasible };

struct PlanResult {
  PlanStatus status = PlanStatus::kNoCrossing;
  std::optional<InterceptionPlan> plan;  // present for kOk and kInfeasible
};

struct PlanContext {
  QuadParams quad;
  BallParams ball;
  RacketGeometry racket;
};

/// Plan a strike on the predicted descent through hit_height.
PlanResult planInterception(const BallState& ball_estimate, const MbppConfig& cfg, const PlanContext& ctx,
                            const QuadState& quad, const Eigen::Vector3d& quad_accel, double t_now);

/// Flatness-based tracking: desired acceleration to thrust and attitude, then an
/// attitude P-law to body rates.
CtbrCommand trackReference(const ReferencePoint& ref, const QuadState& quad, const QuadParams& params,
                           const MbppConfig& cfg, double rate_limit);

struct PlannerLogEntry {
  double time = 0.0;
  PlanStatus status = PlanStatus::kNoCrossing;
  double t_hit = 0.0;
  Eigen::Vector3d hit_point = Eigen::Vector3d::Zero();
  double peak_accel = 0.0;
};

/// Predict -> plan -> open-loop execute juggling agent for one environment.
class MbppAgent {
 public:
  MbppAgent(MbppConfig cfg, const EnvConfig& env_cfg);

  void reset(std::uint64_t seed);
  /// Normalized action for the current environment state.
  RawAction act(const JuggleEnv& env);

  const BallFilter& filter() const { return filter_; }
  const std::optional<InterceptionPlan>& plan() const { return plan_; }
  const std::vector<PlannerLogEntry>& log() const { return log_; }

 private:
  MbppConfig cfg_;
  PlanContext ctx_;
  double control_dt_;
  double rate_limit_;
  BallFilter filter_;
  std::optional<InterceptionPlan> plan_;
  Eigen::Vector3d last_accel_ = Eigen::Vector3d::Zero();
  std::mt19937_64 rng_;
  std::vector<PlannerLogEntry> log_;
};

}  // namespace juggle
