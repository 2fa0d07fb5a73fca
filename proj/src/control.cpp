#include "juggle/control.hpp"

#include <algorithm>
#include <cmath>

namespace juggle {

void RateControllerGains::validate() const {
  if ((kp.array() < 0.0).any() || (ki.array() < 0.0).any() || (kd.array() < 0.0).any()) {
    throw ConfigError("control gains must be >= 0");
  }
  if (!(integrator_limit >= 0.0)) throw ConfigError("control.integrator_limit must be >= 0");
  if (!(rate_limit > 0.0)) throw ConfigError("control.rate_limit must be > 0");
}

Mixer::Mixer(const QuadParams& params)
    : thrust_coeff_(params.thrust_coeff), max_thrust_(params.maxRotorThrust()) {
  const double yaw_arm = params.drag_torque_coeff / params.thrust_coeff;
  for (int j = 0; j < 4; ++j) {
    const Eigen::Vector3d& r = params.rotor_positions[j];
    allocation_(0, j) = 1.0;
    allocation_(1, j) = r.y();
    allocation_(2, j) = -r.x();
    allocation_(3, j) = params.rotor_spin_dirs[j] * yaw_arm;
  }
  Eigen::FullPivLU<Eigen::Matrix4d> lu(allocation_);
  if (!lu.isInvertible()) throw ConfigError("rotor layout gives a singular allocation matrix");
  inverse_ = lu.inverse();
}

Eigen::Vector4d Mixer::allocate(double collective, const Eigen::Vector3d& torque) const {
  return inverse_ * Eigen::Vector4d{collective, torque.x(), torque.y(), torque.z()};
}

std::pair<double, Eigen::Vector3d> Mixer::wrench(const Eigen::Vector4d& rotor_thrusts) const {
  const Eigen::Vector4d w = allocation_ * rotor_thrusts;
  return {w[0], w.tail<3>()};
}

namespace {

// Largest k in [0, 1] keeping base + k * dir inside [0, hi] for every rotor.
// `base` is assumed feasible.
double feasibleScale(const Eigen::Vector4d& base, const Eigen::Vector4d& dir, double hi) {
  double k = 1.0;
  for (int j = 0; j < 4; ++j) {
    if (dir[j] > 0.0) {
      k = std::min(k, (hi - base[j]) / dir[j]);
    } else if (dir[j] < 0.0) {
      k = std::min(k, -base[j] / dir[j]);
    }
  }
  return std::max(k, 0.0);
}

}  // namespace

RotorVector Mixer::rotorCommands(double collective, const Eigen::Vector3d& torque) const {
  const double c = std::clamp(collective, 0.0, 4.0 * max_thrust_);
  const Eigen::Vector4d f_c = allocate(c, Eigen::Vector3d::Zero());
  const Eigen::Vector4d f_rp = allocate(0.0, {torque.x(), torque.y(), 0.0});
  const Eigen::Vector4d f_yaw = allocate(0.0, {0.0, 0.0, torque.z()});

  const double r = feasibleScale(f_c, f_rp, max_thrust_);
  Eigen::Vector4d f = f_c + r * f_rp;
  if (r >= 1.0) f += feasibleScale(f, f_yaw, max_thrust_) * f_yaw;

  RotorVector omega;
  for (int j = 0; j < 4; ++j) omega[j] = std::sqrt(std::clamp(f[j], 0.0, max_thrust_) / thrust_coeff_);
  return omega;
}

RateController::RateController(const QuadParams& params, const RateControllerGains& gains)
    : params_(params), gains_(gains), mixer_(params) {}

void RateController::reset() {
  integral_.setZero();
  prev_rates_.setZero();
  has_prev_ = false;
}

RotorVector RateController::update(const CtbrCommand& cmd, const QuadState& state, double dt) {
  const CtbrCommand c = clampCommand(cmd, params_, gains_.rate_limit);
  const Eigen::Vector3d error = c.body_rates - state.body_rates;

  integral_ += error * dt;
  for (int i = 0; i < 3; ++i) {
    if (gains_.ki[i] > 0.0) {
      const double bound = gains_.integrator_limit / gains_.ki[i];
      integral_[i] = std::clamp(integral_[i], -bound, bound);
    }
  }

  // Derivative on the measurement avoids a kick on setpoint steps.
  Eigen::Vector3d rate_derivative = Eigen::Vector3d::Zero();
  if (has_prev_) rate_derivative = (state.body_rates - prev_rates_) / dt;
  prev_rates_ = state.body_rates;
  has_prev_ = true;

  const Eigen::Vector3d torque = gains_.kp.cwiseProduct(error) + gains_.ki.cwiseProduct(integral_) -
                                 gains_.kd.cwiseProduct(rate_derivative);
  return mixer_.rotorCommands(c.collective_thrust, torque);
}

CtbrCommand clampCommand(const CtbrCommand& cmd, const QuadParams& params, double rate_limit) {
  CtbrCommand c;
  c.collective_thrust = std::clamp(cmd.collective_thrust, 0.0, params.maxCollectiveThrust());
  c.body_rates = cmd.body_rates.cwiseMax(-rate_limit).cwiseMin(rate_limit);
  return c;
}

CtbrCommand normalizeAction(std::span<const double, 4> raw, const QuadParams& params,
                            double rate_limit) {
  auto clip = [](double x) { return std::clamp(x, -1.0, 1.0); };
  CtbrCommand c;
  c.collective_thrust = 0.5 * (clip(raw[0]) + 1.0) * params.maxCollectiveThrust();
  c.body_rates = Eigen::Vector3d{clip(raw[1]), clip(raw[2]), clip(raw[3])} * rate_limit;
  return c;
}

RawAction denormalizeAction(const CtbrCommand& cmd, const QuadParams& params, double rate_limit) {
  auto clip = [](double x) { return std::clamp(x, -1.0, 1.0); };
  return {clip(2.0 * cmd.collective_thrust / params.maxCollectiveThrust() - 1.0),
          clip(cmd.body_rates.x() / rate_limit), clip(cmd.body_rates.y() / rate_limit),
          clip(cmd.body_rates.z() / rate_limit)};
}

}  // namespace juggle
