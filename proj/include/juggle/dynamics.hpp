#pragma once

#include <array>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace juggle {

inline constexpr double kGravity = 9.81;

inline Eigen::Vector3d gravityWorld() { return {0.0, 0.0, -kGravity}; }

/// Raised when a state contains non-finite values.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for invalid parameters or integration settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using RotorVector = Eigen::Vector4d;

/// Rigid-body and rotor constants of the quadrotor.
///
/// Defaults are the identified values of the 1.09 kg juggling platform. The
/// rotor torque coefficient, motor time constant and arm geometry were never
/// measured on the real vehicle and carry typical values instead.
struct QuadParams {
  double mass = 1.090;                                      // kg
  Eigen::Vector3d inertia{5.29e-3, 5.62e-3, 7.80e-3};       // kg m^2, diagonal
  double thrust_coeff = 5.39e-6;                            // N / (rad/s)^2
  double drag_torque_coeff = 0.016 * 5.39e-6;               // N m / (rad/s)^2
  double motor_time_constant = 0.05;                        // s
  std::array<Eigen::Vector3d, 4> rotor_positions = xLayout(0.12);
  std::array<int, 4> rotor_spin_dirs{1, -1, 1, -1};
  double max_rotor_speed = 1200.0;                          // rad/s

  /// X-configuration rotor positions for the given arm length.
  /// Order: front-left, rear-left, rear-right, front-right.
  static std::array<Eigen::Vector3d, 4> xLayout(double arm_length);

  void validate() const;

  double hoverRotorSpeed() const;
  double maxRotorThrust() const { return thrust_coeff * max_rotor_speed * max_rotor_speed; }
  double maxCollectiveThrust() const { return 4.0 * maxRotorThrust(); }
};

/// Quadrotor state. Attitude is a Hamilton quaternion rotating body vectors
/// into the world frame.
struct QuadState {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond attitude = Eigen::Quaterniond::Identity();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();
  Eigen::Vector3d body_rates = Eigen::Vector3d::Zero();
  RotorVector rotor_speeds = RotorVector::Zero();

  bool isFinite() const;
  Eigen::Matrix3d rotation() const { return attitude.toRotationMatrix(); }
};

struct QuadDerivative {
  Eigen::Vector3d position;
  Eigen::Vector4d attitude;  // (w, x, y, z) rate of the quaternion coefficients
  Eigen::Vector3d velocity;
  Eigen::Vector3d body_rates;
  RotorVector rotor_speeds;
};

struct BallParams {
  double mass = 0.0472;        // kg
  double radius = 0.02;        // m
  bool drag_enabled = false;
  double drag_coeff = 0.47;
  double air_density = 1.204;  // kg/m^3

  void validate() const;
  /// Deceleration factor k such that a_drag = -k |v| v.
  double dragFactor() const;
};

struct BallState {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d velocity = Eigen::Vector3d::Zero();

  bool isFinite() const { return position.allFinite() && velocity.allFinite(); }
};

struct BallDerivative {
  Eigen::Vector3d position;
  Eigen::Vector3d velocity;
};

/// Clamp each rotor command into [0, max_rotor_speed].
RotorVector clampRotorSpeeds(const RotorVector& speeds, const QuadParams& params);

/// Collective body-frame force and torque produced by the given rotor speeds.
std::pair<Eigen::Vector3d, Eigen::Vector3d> propellerWrench(const RotorVector& rotor_speeds,
                                                            const QuadParams& params);

QuadDerivative quadDerivative(const QuadState& state, const QuadParams& params,
                              const RotorVector& rotor_cmd);

BallDerivative ballDerivative(const BallState& state, const BallParams& params);

/// One RK4 step of the quadrotor with the rotor command held constant.
/// The quaternion is renormalized and rotor speeds clamped afterwards.
QuadState integrateQuad(const QuadState& state, const QuadParams& params,
                        const RotorVector& rotor_cmd, double dt);

BallState integrateBall(const BallState& state, const BallParams& params, double dt);

/// Advance quadrotor and ball together by dt.
std::pair<QuadState, BallState> integrateStep(const QuadState& quad, const BallState& ball,
                                              const RotorVector& rotor_cmd,
                                              const QuadParams& quad_params,
                                              const BallParams& ball_params, double dt);

/// Level hover at the given position with rotors spinning at hover speed.
QuadState hoverState(const Eigen::Vector3d& position, const QuadParams& params);

/// Yaw angle (Z-Y-X convention) of a rotation matrix, wrapped to (-pi, pi].
double yawOf(const Eigen::Matrix3d& rotation);

}  // namespace juggle
