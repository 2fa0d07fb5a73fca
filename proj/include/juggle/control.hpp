#pragma once

#include <array>
#include <numbers>
#include <span>

#include "juggle/dynamics.hpp"

namespace juggle {

/// Mid-level command: collective thrust [N] and body rates [rad/s].
struct CtbrCommand {
  double collective_thrust = 0.0;
  Eigen::Vector3d body_rates = Eigen::Vector3d::Zero();
};

using RawAction = std::array<double, 4>;

struct RateControllerGains {
  Eigen::Vector3d kp = Eigen::Vector3d::Constant(0.15);
  Eigen::Vector3d ki = Eigen::Vector3d::Constant(0.05);
  Eigen::Vector3d kd = Eigen::Vector3d::Constant(0.005);
  double integrator_limit = 0.05;          // N m, per axis
  double rate_limit = std::numbers::pi;    // rad/s

  void validate() const;
};

/// Thrust allocation for a four-rotor layout. Maps (collective thrust, body
/// torque) to per-rotor thrusts and back.
class Mixer {
 public:
  explicit Mixer(const QuadParams& params);

  /// Per-rotor thrusts for the wrench, without saturation handling.
  Eigen::Vector4d allocate(double collective, const Eigen::Vector3d& torque) const;
  /// Collective thrust and torque produced by per-rotor thrusts.
  std::pair<double, Eigen::Vector3d> wrench(const Eigen::Vector4d& rotor_thrusts) const;

  /// Saturating allocation: collective thrust is kept first, then roll/pitch
  /// torque; yaw torque is shed first. Returns rotor speed commands.
  RotorVector rotorCommands(double collective, const Eigen::Vector3d& torque) const;

  double maxRotorThrust() const { return max_thrust_; }

 private:
  Eigen::Matrix4d allocation_;
  Eigen::Matrix4d inverse_;
  double thrust_coeff_;
  double max_thrust_;
};

/// Body-rate PID followed by the mixer. Holds integrator state for one vehicle.
class RateController {
 public:
  RateController(const QuadParams& params, const RateControllerGains& gains);

  void reset();
  RotorVector update(const CtbrCommand& cmd, const QuadState& state, double dt);

  const Eigen::Vector3d& integral() const { return integral_; }
  const Mixer& mixer() const { return mixer_; }

 private:
  QuadParams params_;
  RateControllerGains gains_;
  Mixer mixer_;
  Eigen::Vector3d integral_ = Eigen::Vector3d::Zero();
  Eigen::Vector3d prev_rates_ = Eigen::Vector3d::Zero();
  bool has_prev_ = false;
};

/// Clamp the command into its admissible box.
CtbrCommand clampCommand(const CtbrCommand& cmd, const QuadParams& params, double rate_limit);

/// Scale a policy output in [-1, 1]^4 to physical CTBR units.
CtbrCommand normalizeAction(std::span<const double, 4> raw, const QuadParams& params,
                            double rate_limit);
/// Inverse of normalizeAction (clamped to [-1, 1]).
RawAction denormalizeAction(const CtbrCommand& cmd, const QuadParams& params, double rate_limit);

}  // namespace juggle
