#pragma once

#include <optional>

#include "juggle/dynamics.hpp"

namespace juggle {

/// Flat circular racket rigidly attached to the quadrotor body.
struct RacketGeometry {
  double disc_radius = 0.10;                       // m
  double sweet_radius = 0.055;                     // m
  Eigen::Vector3d offset_body{0.0, 0.0, 0.05};     // racket centre in body frame
  Eigen::Vector3d normal_body{0.0, 0.0, 1.0};      // face normal in body frame

  void validate() const;

  /// Racket sized to the sweet spot only (disc = sweet = 5.5 cm).
  static RacketGeometry sweetSpotOnly();

  Eigen::Vector3d centerWorld(const QuadState& quad) const;
  Eigen::Vector3d normalWorld(const QuadState& quad) const;
};

/// Two-level restitution: sweet spot inside `sweet_radius`, outer ring beyond.
/// Domain randomization replaces both with a single sampled coefficient.
struct RestitutionModel {
  double e_sweet = 0.82;
  double e_outer = 0.64;
  std::optional<double> e_override;

  void validate() const;
  double coefficient(double d_axis, const RacketGeometry& geom) const;
};

struct TaskWindows {
  double z_hit_min = 0.8;
  double z_hit_max = 1.4;
  double z_apex_min = 2.85;
  double z_apex_max = 3.2;

  void validate() const;
};

struct Contact {
  double fraction = 0.0;                 // time of contact within the step, in [0, 1]
  Eigen::Vector3d point;                 // contact point on the racket face, world frame
  Eigen::Vector3d ball_center;           // ball centre at contact
  Eigen::Vector3d ball_velocity;         // incoming ball velocity at contact
  Eigen::Vector3d racket_velocity;       // racket surface velocity at the contact point
  Eigen::Vector3d normal;                // racket face normal, world frame
  double d_axis = 0.0;                   // distance of contact from the racket centreline
};

/// Rebound record for one racket strike.
struct HitEvent {
  double time = 0.0;
  Eigen::Vector3d contact_point_world;
  double d_axis = 0.0;
  Eigen::Vector3d ball_velocity_in;
  Eigen::Vector3d ball_velocity_out;
  Eigen::Vector3d racket_velocity;
  double restitution = 0.0;
  bool hit_valid = false;
  bool credited = false;                 // counted toward the hit reward
  std::optional<bool> apex_valid;        // resolved when the following apex is observed
};

struct ApexEvent {
  double time = 0.0;
  double z_apex = 0.0;
  bool apex_valid = false;
};

/// Largest penetration depth, relative to ball radius, still treated as a
/// contact from the face side (covers a ball left resting on the face).
inline constexpr double kPenetrationAllowance = 0.5;
/// Minimum closing speed for a contact.
inline constexpr double kMinClosingSpeed = 1e-6;

/// Swept contact test between consecutive substeps. The racket pose is
/// interpolated between `quad_prev` and `quad_next`; the ball surface touching
/// the face plane defines the contact.
std::optional<Contact> detectContact(const QuadState& quad_prev, const QuadState& quad_next,
                                     const BallState& ball_prev, const BallState& ball_next,
                                     const RacketGeometry& geom, double ball_radius, double dt);

/// Static-racket variant: the quadrotor pose is held over the step.
std::optional<Contact> detectContact(const QuadState& quad, const BallState& ball_prev,
                                     const BallState& ball_next, const RacketGeometry& geom,
                                     double ball_radius, double dt);

/// Outgoing ball velocity for an infinite-mass racket: the normal relative
/// velocity is reversed and scaled by e, the tangential part is untouched.
Eigen::Vector3d reboundVelocity(const Eigen::Vector3d& v_in, const Eigen::Vector3d& racket_velocity,
                                const Eigen::Vector3d& normal, double restitution);

/// Ball state right after impact, positioned at the contact.
BallState resolveImpact(const Contact& contact, const RestitutionModel& model,
                        const RacketGeometry& geom);

/// Closed interval test on the contact height.
bool classifyHit(double z_hit, const TaskWindows& windows);
bool classifyApex(double z_apex, const TaskWindows& windows);

/// Watches one flight arc after a hit and reports its apex once.
class ApexTracker {
 public:
  void arm() { armed_ = true; }
  void disarm() { armed_ = false; }
  bool armed() const { return armed_; }

  /// Feed consecutive ball samples. Emits the apex at the first + to - sign
  /// change of v_z, refined inside the substep, then disarms.
  std::optional<ApexEvent> observe(const BallState& prev, const BallState& next, double t_prev,
                                    double dt, const TaskWindows& windows);

 private:
  bool armed_ = false;
};

}  // namespace juggle
