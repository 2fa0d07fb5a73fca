#include "juggle/dynamics.hpp"

#include <cmath>
#include <numbers>

namespace juggle {

std::array<Eigen::Vector3d, 4> QuadParams::xLayout(double arm_length) {
  const double d = arm_length / std::numbers::sqrt2;
  return {Eigen::Vector3d{d, d, 0.0}, Eigen::Vector3d{-d, d, 0.0}, Eigen::Vector3d{-d, -d, 0.0},
          Eigen::Vector3d{d, -d, 0.0}};
}

void QuadParams::validate() const {
  if (!(mass > 0.0)) throw ConfigError("quad.mass must be > 0");
  if (!(inertia.array() > 0.0).all()) throw ConfigError("quad.inertia entries must be > 0");
  if (!(thrust_coeff > 0.0)) throw ConfigError("quad.thrust_coeff must be > 0");
  if (!(drag_torque_coeff >= 0.0)) throw ConfigError("quad.drag_torque_coeff must be >= 0");
  if (!(motor_time_constant > 0.0)) throw ConfigError("quad.motor_time_constant must be > 0");
  if (!(max_rotor_speed > 0.0)) throw ConfigError("quad.max_rotor_speed must be > 0");
  int spin_sum = 0;
  for (int dir : rotor_spin_dirs) {
    if (dir != 1 && dir != -1) throw ConfigError("quad.rotor_spin_dirs entries must be +1 or -1");
    spin_sum += dir;
  }
  if (spin_sum != 0) throw ConfigError("quad.rotor_spin_dirs must contain two CW and two CCW rotors");
  for (const auto& r : rotor_positions) {
    if (!r.allFinite()) throw ConfigError("quad.rotor_positions must be finite");
  }
}

double QuadParams::hoverRotorSpeed() const {
  return std::sqrt(mass * kGravity / (4.0 * thrust_coeff));
}

bool QuadState::isFinite() const {
  return position.allFinite() && attitude.coeffs().allFinite() && velocity.allFinite() &&
         body_rates.allFinite() && rotor_speeds.allFinite();
}

void BallParams::validate() const {
  if (!(mass > 0.0)) throw ConfigError("ball.mass must be > 0");
  if (!(radius > 0.0)) throw ConfigError("ball.radius must be > 0");
  if (!(drag_coeff >= 0.0)) throw ConfigError("ball.drag_coeff must be >= 0");
  if (!(air_density >= 0.0)) throw ConfigError("ball.air_density must be >= 0");
}

double BallParams::dragFactor() const {
  if (!drag_enabled) return 0.0;
  return 0.5 * air_density * drag_coeff * std::numbers::pi * radius * radius / mass;
}

RotorVector clampRotorSpeeds(const RotorVector& speeds, const QuadParams& params) {
  return speeds.cwiseMax(0.0).cwiseMin(params.max_rotor_speed);
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> propellerWrench(const RotorVector& rotor_speeds,
                                                            const QuadParams& params) {
  Eigen::Vector3d force = Eigen::Vector3d::Zero();
  Eigen::Vector3d torque = Eigen::Vector3d::Zero();
  for (int j = 0; j < 4; ++j) {
    const double w2 = rotor_speeds[j] * rotor_speeds[j];
    const Eigen::Vector3d f_j{0.0, 0.0, params.thrust_coeff * w2};
    const Eigen::Vector3d tau_j{0.0, 0.0, params.rotor_spin_dirs[j] * params.drag_torque_coeff * w2};
    force += f_j;
    torque += tau_j + params.rotor_positions[j].cross(f_j);
  }
  return {force, torque};
}

QuadDerivative quadDerivative(const QuadState& state, const QuadParams& params,
                              const RotorVector& rotor_cmd) {
  if (!state.isFinite() || !rotor_cmd.allFinite()) {
    throw StateError("quadDerivative: non-finite state or rotor command");
  }
  const RotorVector cmd = clampRotorSpeeds(rotor_cmd, params);
  const auto [force_body, torque_body] = propellerWrench(state.rotor_speeds, params);

  QuadDerivative d;
  d.position = state.velocity;

  // q_dot = q (x) [0, w/2]
  const Eigen::Quaterniond omega_q(0.0, 0.5 * state.body_rates.x(), 0.5 * state.body_rates.y(),
                                   0.5 * state.body_rates.z());
  const Eigen::Quaterniond q_dot = state.attitude * omega_q;
  d.attitude = {q_dot.w(), q_dot.x(), q_dot.y(), q_dot.z()};

  d.velocity = (state.attitude * force_body) / params.mass + gravityWorld();

  const Eigen::Vector3d& w = state.body_rates;
  const Eigen::Vector3d iw = params.inertia.cwiseProduct(w);
  d.body_rates = (torque_body - w.cross(iw)).cwiseQuotient(params.inertia);

  d.rotor_speeds = (cmd - state.rotor_speeds) / params.motor_time_constant;
  return d;
}

BallDerivative ballDerivative(const BallState& state, const BallParams& params) {
  if (!state.isFinite()) throw StateError("ballDerivative: non-finite ball state");
  BallDerivative d;
  d.position = state.velocity;
  d.velocity = gravityWorld();
  const double k = params.dragFactor();
  if (k > 0.0) d.velocity -= k * state.velocity.norm() * state.velocity;
  return d;
}

namespace {

QuadState offset(const QuadState& s, const QuadDerivative& d, double h) {
  QuadState out;
  out.position = s.position + h * d.position;
  const Eigen::Vector4d q =
      Eigen::Vector4d{s.attitude.w(), s.attitude.x(), s.attitude.y(), s.attitude.z()} + h * d.attitude;
  out.attitude = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
  out.velocity = s.velocity + h * d.velocity;
  out.body_rates = s.body_rates + h * d.body_rates;
  out.rotor_speeds = s.rotor_speeds + h * d.rotor_speeds;
  return out;
}

BallState offset(const BallState& s, const BallDerivative& d, double h) {
  return {s.position + h * d.position, s.velocity + h * d.velocity};
}

void requirePositiveStep(double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("integration step dt must be > 0");
}

}  // namespace

QuadState integrateQuad(const QuadState& state, const QuadParams& params,
                        const RotorVector& rotor_cmd, double dt) {
  requirePositiveStep(dt);
  const QuadDerivative k1 = quadDerivative(state, params, rotor_cmd);
  const QuadDerivative k2 = quadDerivative(offset(state, k1, 0.5 * dt), params, rotor_cmd);
  const QuadDerivative k3 = quadDerivative(offset(state, k2, 0.5 * dt), params, rotor_cmd);
  const QuadDerivative k4 = quadDerivative(offset(state, k3, dt), params, rotor_cmd);

  QuadDerivative sum;
  sum.position = k1.position + 2.0 * k2.position + 2.0 * k3.position + k4.position;
  sum.attitude = k1.attitude + 2.0 * k2.attitude + 2.0 * k3.attitude + k4.attitude;
  sum.velocity = k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity;
  sum.body_rates = k1.body_rates + 2.0 * k2.body_rates + 2.0 * k3.body_rates + k4.body_rates;
  sum.rotor_speeds = k1.rotor_speeds + 2.0 * k2.rotor_speeds + 2.0 * k3.rotor_speeds + k4.rotor_speeds;

  QuadState next = offset(state, sum, dt / 6.0);
  next.attitude.normalize();
  next.rotor_speeds = clampRotorSpeeds(next.rotor_speeds, params);
  return next;
}

BallState integrateBall(const BallState& state, const BallParams& params, double dt) {
  requirePositiveStep(dt);
  const BallDerivative k1 = ballDerivative(state, params);
  const BallDerivative k2 = ballDerivative(offset(state, k1, 0.5 * dt), params);
  const BallDerivative k3 = ballDerivative(offset(state, k2, 0.5 * dt), params);
  const BallDerivative k4 = ballDerivative(offset(state, k3, dt), params);
  BallDerivative sum{k1.position + 2.0 * k2.position + 2.0 * k3.position + k4.position,
                     k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity};
  return offset(state, sum, dt / 6.0);
}

std::pair<QuadState, BallState> integrateStep(const QuadState& quad, const BallState& ball,
                                              const RotorVector& rotor_cmd,
                                              const QuadParams& quad_params,
                                              const BallParams& ball_params, double dt) {
  return {integrateQuad(quad, quad_params, rotor_cmd, dt), integrateBall(ball, ball_params, dt)};
}

QuadState hoverState(const Eigen::Vector3d& position, const QuadParams& params) {
  QuadState s;
  s.position = position;
  s.rotor_speeds.setConstant(params.hoverRotorSpeed());
  return s;
}

double yawOf(const Eigen::Matrix3d& rotation) {
  double yaw = std::atan2(rotation(1, 0), rotation(0, 0));
  if (yaw <= -std::numbers::pi) yaw += 2.0 * std::numbers::pi;
  return yaw;
}

}  // namespace juggle
