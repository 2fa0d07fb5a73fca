#include "juggle/mbpp.hpp"

#include <algorithm>
#include <cmath>

namespace juggle {

void BallFilterConfig::validate() const {
  if (!(process_noise >= 0.0)) throw ConfigError("mbpp.filter.process_noise must be >= 0");
  if (!(measurement_noise >= 0.0)) throw ConfigError("mbpp.filter.measurement_noise must be >= 0");
  if (!(initial_velocity_std > 0.0)) throw ConfigError("mbpp.filter.initial_velocity_std must be > 0");
  if (!(innovation_gate > 0.0)) throw ConfigError("mbpp.filter.innovation_gate must be > 0");
}

BallFilter::BallFilter(BallFilterConfig cfg) : cfg_(cfg) { cfg_.validate(); }

namespace {

// Updates before the innovation gate is trusted: the first two fix position
// and velocity.
constexpr int kGateWarmupUpdates = 3;

Matrix6d priorCovariance(const BallFilterConfig& cfg) {
  Matrix6d P = Matrix6d::Zero();
  P.topLeftCorner<3, 3>().diagonal().setConstant(cfg.measurement_noise * cfg.measurement_noise);
  P.bottomRightCorner<3, 3>().diagonal().setConstant(cfg.initial_velocity_std * cfg.initial_velocity_std);
  return P;
}

}  // namespace

void BallFilter::initialize(const Eigen::Vector3d& position) {
  x_.head<3>() = position;
  x_.tail<3>().setZero();
  P_ = priorCovariance(cfg_);
  age_ = 0.0;
  updates_ = 0;
  initialized_ = true;
}

void BallFilter::predict(double dt) {
  if (!(dt > 0.0)) throw ConfigError("filter predict requires dt > 0");
  const Eigen::Vector3d g = gravityWorld();
  x_.head<3>() += x_.tail<3>() * dt + 0.5 * g * dt * dt;
  x_.tail<3>() += g * dt;

  Matrix6d F = Matrix6d::Identity();
  F.topRightCorner<3, 3>().diagonal().setConstant(dt);
  const double q = cfg_.process_noise * cfg_.process_noise;
  Matrix6d Q = Matrix6d::Zero();
  Q.topLeftCorner<3, 3>().diagonal().setConstant(q * dt * dt * dt / 3.0);
  Q.topRightCorner<3, 3>().diagonal().setConstant(q * dt * dt / 2.0);
  Q.bottomLeftCorner<3, 3>().diagonal().setConstant(q * dt * dt / 2.0);
  Q.bottomRightCorner<3, 3>().diagonal().setConstant(q * dt);
  P_ = F * P_ * F.transpose() + Q;
  age_ += dt;
}

bool BallFilter::update(const Eigen::Vector3d& z) {
  if (!initialized_) {
    initialize(z);
    return true;
  }
  const Eigen::Vector3d innovation = z - x_.head<3>();
  if (updates_ >= kGateWarmupUpdates && innovation.norm() > cfg_.innovation_gate) {
    initialize(z);
    ++restarts_;
    return false;
  }
  const Eigen::Matrix3d R = Eigen::Matrix3d::Identity() * cfg_.measurement_noise * cfg_.measurement_noise;
  const Eigen::Matrix3d S = P_.topLeftCorner<3, 3>() + R;
  // K = P H^T S^-1 with H = [I 0].
  const Eigen::Matrix<double, 6, 3> K = S.ldlt().solve(P_.leftCols<3>().transpose()).transpose();
  x_ += K * innovation;
  Matrix6d IKH = Matrix6d::Identity();
  IKH.leftCols<3>() -= K;
  P_ = IKH * P_ * IKH.transpose() + K * R * K.transpose();
  P_ = 0.5 * (P_ + P_.transpose());
  ++updates_;

  Eigen::SelfAdjointEigenSolver<Matrix6d> eig(P_, Eigen::EigenvaluesOnly);
  if (!P_.allFinite() || eig.eigenvalues().minCoeff() < -1e-12) {
    P_ = priorCovariance(cfg_) * 10.0;
    ++covariance_resets_;
  }
  return true;
}

bool BallFilter::step(const std::optional<Eigen::Vector3d>& measurement, double dt) {
  if (!initialized_) {
    if (measurement) initialize(*measurement);
    return true;
  }
  predict(dt);
  return measurement ? update(*measurement) : true;
}

// ------------------------------------------------------------ prediction

std::vector<BallState> predictBall(const BallState& start, const BallParams& params, double horizon, double dt) {
  if (!(dt > 0.0) || !(horizon >= 0.0)) throw ConfigError("predictBall requires dt > 0 and horizon >= 0");
  std::vector<BallState> out{start};
  const int steps = static_cast<int>(std::ceil(horizon / dt - 1e-9));
  BallState s = start;
  for (int k = 0; k < steps; ++k) {
    s = integrateBall(s, params, dt);
    out.push_back(s);
  }
  return out;
}

std::optional<HeightCrossing> timeToHeight(const BallState& start, const BallParams& params, double z,
                                           double horizon, double dt) {
  if (start.position.z() == z && start.velocity.z() < 0.0) return HeightCrossing{0.0, start};
  BallState prev = start;
  double t = 0.0;
  while (t < horizon) {
    const BallState next = integrateBall(prev, params, dt);
    if (prev.position.z() > z && next.position.z() <= z && next.velocity.z() < 0.0) {
      double lo = 0.0;
      double hi = dt;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (integrateBall(prev, params, mid).position.z() > z) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      const double tau = 0.5 * (lo + hi);
      return HeightCrossing{t + tau, integrateBall(prev, params, tau)};
    }
    prev = next;
    t += dt;
  }
  return std::nullopt;
}

double apexHeight(const BallState& start, const BallParams& params, double dt) {
  const double vz = start.velocity.z();
  if (vz <= 0.0) return start.position.z();
  if (!params.drag_enabled) return start.position.z() + vz * vz / (2.0 * kGravity);
  BallState prev = start;
  for (int k = 0; k < 100000; ++k) {
    const BallState next = integrateBall(prev, params, dt);
    if (next.velocity.z() <= 0.0) {
      double lo = 0.0;
      double hi = dt;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (integrateBall(prev, params, mid).velocity.z() > 0.0) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      return integrateBall(prev, params, 0.5 * (lo + hi)).position.z();
    }
    prev = next;
  }
  return prev.position.z();
}

double requiredLaunchSpeed(double z_from, double z_to, const BallParams& params) {
  if (!(z_to > z_from)) throw ConfigError("target apex must lie above the hit height");
  const double vacuum = std::sqrt(2.0 * kGravity * (z_to - z_from));
  if (!params.drag_enabled) return vacuum;
  auto apex = [&](double v) {
    return apexHeight(BallState{Eigen::Vector3d{0.0, 0.0, z_from}, Eigen::Vector3d{0.0, 0.0, v}}, params);
  };
  double lo = vacuum;
  double hi = 2.0 * vacuum;
  while (apex(hi) < z_to) hi *= 2.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (apex(mid) < z_to ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double invertRestitution(double v_out, double v_in, double e) { return (v_out + e * v_in) / (1.0 + e); }

// --------------------------------------------------------------- quintic

Quintic Quintic::solve(double p0, double v0, double a0, double p1, double v1, double a1, double T) {
  if (!(T > 0.0)) throw ConfigError("quintic duration must be > 0");
  const double dp = p1 - p0;
  const double T2 = T * T;
  const double T3 = T2 * T;
  Quintic q;
  q.duration = T;
  q.c[0] = p0;
  q.c[1] = v0;
  q.c[2] = 0.5 * a0;
  q.c[3] = (20.0 * dp - (8.0 * v1 + 12.0 * v0) * T - (3.0 * a0 - a1) * T2) / (2.0 * T3);
  q.c[4] = (-30.0 * dp + (14.0 * v1 + 16.0 * v0) * T + (3.0 * a0 - 2.0 * a1) * T2) / (2.0 * T3 * T);
  q.c[5] = (12.0 * dp - 6.0 * (v1 + v0) * T + (a1 - a0) * T2) / (2.0 * T3 * T2);
  return q;
}

double Quintic::position(double t) const {
  return c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
}

double Quintic::velocity(double t) const {
  return c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
}

double Quintic::acceleration(double t) const {
  return 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
}

void MbppConfig::validate() const {
  if (!(target_apex > hit_height)) throw ConfigError("mbpp.target_apex must exceed mbpp.hit_height");
  if (!(e_assumed > 0.0 && e_assumed <= 1.0)) throw ConfigError("mbpp.e_assumed must lie in (0, 1]");
  if (!(accel_margin > 0.0 && accel_margin <= 1.0)) throw ConfigError("mbpp.accel_margin must lie in (0, 1]");
  if (!(freeze_time >= 0.0)) throw ConfigError("mbpp.freeze_time must be >= 0");
  if (!(min_track_time >= 0.0)) throw ConfigError("mbpp.min_track_time must be >= 0");
  if (!(ready_track_time >= 0.0)) throw ConfigError("mbpp.ready_track_time must be >= 0");
  if (!(lateral_settle_time >= 0.0)) throw ConfigError("mbpp.lateral_settle_time must be >= 0");
  if (!(horizon > 0.0)) throw ConfigError("mbpp.horizon must be > 0");
  if (!(lateral_position_gain >= 0.0 && lateral_velocity_gain >= 0.0 && vertical_position_gain >= 0.0 &&
        vertical_velocity_gain >= 0.0 && attitude_gain >= 0.0)) {
    throw ConfigError("mbpp gains must be >= 0");
  }
  if (!(measurement_noise >= 0.0)) throw ConfigError("mbpp.measurement_noise must be >= 0");
  filter.validate();
}

ReferencePoint InterceptionPlan::reference(double t) const {
  const double s = std::clamp(t - t0, 0.0, t_hit - t0);
  ReferencePoint r;
  for (int k = 0; k < 3; ++k) {
    // Axes that finish early coast at their end velocity.
    const double sk = std::min(s, axes[k].duration);
    r.velocity[k] = axes[k].velocity(sk);
    r.position[k] = axes[k].position(sk) + r.velocity[k] * (s - sk);
    r.acceleration[k] = s > sk ? 0.0 : axes[k].acceleration(sk);
  }
  return r;
}

// ---------------------------------------------------------------- planning

PlanResult planInterception(const BallState& ball_estimate, const MbppConfig& cfg, const PlanContext& ctx,
                            const QuadState& quad, const Eigen::Vector3d& quad_accel, double t_now) {
  PlanResult result;
  const auto crossing = timeToHeight(ball_estimate, ctx.ball, cfg.hit_height, cfg.horizon);
  if (!crossing) return result;
  const double T = crossing->time;
  if (T < 1e-3) {
    result.status = PlanStatus::kInfeasible;
    return result;
  }

  InterceptionPlan plan;
  plan.t0 = t_now;
  plan.t_hit = t_now + T;
  plan.hit_point = crossing->state.position;
  plan.ball_velocity_in = crossing->state.velocity;
  plan.racket_normal = Eigen::Vector3d::UnitZ();
  const double v_out = requiredLaunchSpeed(cfg.hit_height, cfg.target_apex, ctx.ball);
  plan.racket_velocity = Eigen::Vector3d{0.0, 0.0, invertRestitution(v_out, plan.ball_velocity_in.z(), cfg.e_assumed)};

  // Level attitude at impact: body origin sits below the ball by the racket
  // offset plus the ball radius.
  const Eigen::Vector3d target =
      plan.hit_point - ctx.racket.offset_body - ctx.racket.normal_body * ctx.ball.radius;
  // Lateral axes arrive early so the attitude is level at impact.
  const double t_lateral = T >= 2.0 * cfg.lateral_settle_time ? T - cfg.lateral_settle_time : T;
  for (int k = 0; k < 3; ++k) {
    plan.axes[k] = Quintic::solve(quad.position[k], quad.velocity[k], quad_accel[k], target[k],
                                  plan.racket_velocity[k], 0.0, k < 2 ? t_lateral : T);
  }

  constexpr int kSamples = 100;
  for (int i = 0; i <= kSamples; ++i) {
    const double s = T * i / kSamples;
    plan.peak_accel = std::max(plan.peak_accel, plan.reference(t_now + s).acceleration.norm());
  }
  plan.accel_limit = cfg.accel_margin * (ctx.quad.maxCollectiveThrust() / ctx.quad.mass - kGravity);
  plan.feasible = plan.peak_accel <= plan.accel_limit;
  result.status = plan.feasible ? PlanStatus::kOk : PlanStatus::kInfeasible;
  result.plan = plan;
  return result;
}

CtbrCommand trackReference(const ReferencePoint& ref, const QuadState& quad, const QuadParams& params,
                           const MbppConfig& cfg, double rate_limit) {
  const Eigen::Vector3d kp{cfg.lateral_position_gain, cfg.lateral_position_gain, cfg.vertical_position_gain};
  const Eigen::Vector3d kd{cfg.lateral_velocity_gain, cfg.lateral_velocity_gain, cfg.vertical_velocity_gain};
  const Eigen::Vector3d a_des = ref.acceleration + kp.cwiseProduct(ref.position - quad.position) +
                                kd.cwiseProduct(ref.velocity - quad.velocity);
  Eigen::Vector3d f = params.mass * (a_des - gravityWorld());
  f.z() = std::max(f.z(), 0.1 * params.mass * kGravity);

  const Eigen::Vector3d zb = f.normalized();
  const Eigen::Vector3d yb = zb.cross(Eigen::Vector3d::UnitX()).normalized();
  const Eigen::Vector3d xb = yb.cross(zb);
  Eigen::Matrix3d Rd;
  Rd << xb, yb, zb;

  const Eigen::Matrix3d R = quad.rotation();
  const Eigen::Matrix3d E = 0.5 * (Rd.transpose() * R - R.transpose() * Rd);
  const Eigen::Vector3d e_rot{E(2, 1), E(0, 2), E(1, 0)};

  CtbrCommand cmd;
  cmd.collective_thrust = std::max(0.0, f.dot(R.col(2)));
  cmd.body_rates = -cfg.attitude_gain * e_rot;
  return clampCommand(cmd, params, rate_limit);
}

// ------------------------------------------------------------------- agent

MbppAgent::MbppAgent(MbppConfig cfg, const EnvConfig& env_cfg)
    : cfg_(std::move(cfg)),
      ctx_{env_cfg.quad, env_cfg.ball, env_cfg.racket},
      control_dt_(env_cfg.controlDt()),
      rate_limit_(env_cfg.control.rate_limit),
      filter_(cfg_.filter) {
  cfg_.validate();
}

void MbppAgent::reset(std::uint64_t seed) {
  filter_ = BallFilter(cfg_.filter);
  plan_.reset();
  last_accel_.setZero();
  rng_.seed(seed);
  log_.clear();
}

RawAction MbppAgent::act(const JuggleEnv& env) {
  const double t = env.episode().time;
  const QuadState& quad = env.quad();
  std::normal_distribution<double> noise(0.0, 1.0);
  Eigen::Vector3d meas = env.ball().position;
  if (cfg_.measurement_noise > 0.0) {
    for (int k = 0; k < 3; ++k) meas[k] += cfg_.measurement_noise * noise(rng_);
  }

  if (!filter_.initialized()) {
    filter_.initialize(meas);
  } else if (!filter_.step(meas, control_dt_)) {
    plan_.reset();  // track restarted: the ball bounced
  }

  const bool frozen = plan_ && t >= plan_->t_hit - cfg_.freeze_time && t <= plan_->t_hit + control_dt_;
  if (plan_ && t > plan_->t_hit + control_dt_) plan_.reset();
  if (!frozen && filter_.trackAge() >= cfg_.min_track_time) {
    // Replanning continues from the current reference so it stays smooth.
    QuadState start = quad;
    Eigen::Vector3d start_accel = last_accel_;
    if (plan_) {
      const ReferencePoint r = plan_->reference(t);
      start.position = r.position;
      start.velocity = r.velocity;
      start_accel = r.acceleration;
    }
    const PlanResult res = planInterception(filter_.ballState(), cfg_, ctx_, start, start_accel, t);
    if (res.status != PlanStatus::kNoCrossing) {
      PlannerLogEntry entry;
      entry.time = t;
      entry.status = res.status;
      if (res.plan) {
        entry.t_hit = res.plan->t_hit;
        entry.hit_point = res.plan->hit_point;
        entry.peak_accel = res.plan->peak_accel;
      }
      log_.push_back(entry);
    }
    if (res.status == PlanStatus::kOk) plan_ = res.plan;
  }

  ReferencePoint ref;
  if (plan_) {
    ref = plan_->reference(t);
    ref.acceleration = plan_->reference(t + cfg_.feedforward_lead).acceleration;
    if (frozen && cfg_.level_at_impact) {
      ref.position.head<2>() = quad.position.head<2>();
      ref.velocity.head<2>() = quad.velocity.head<2>();
      ref.acceleration.head<2>().setZero();
    }
  } else {
    // Wait under the predicted crossing once the track has settled.
    Eigen::Vector2d xy = filter_.position().head<2>();
    if (filter_.trackAge() >= cfg_.ready_track_time) {
      if (const auto crossing = timeToHeight(filter_.ballState(), ctx_.ball, cfg_.hit_height, cfg_.horizon)) {
        xy = crossing->state.position.head<2>();
      }
    }
    ref.position = Eigen::Vector3d{xy.x(), xy.y(), cfg_.ready_height};
  }
  last_accel_ = ref.acceleration;
  return denormalizeAction(trackReference(ref, quad, ctx_.quad, cfg_, rate_limit_), ctx_.quad, rate_limit_);
}

}  // namespace juggle
