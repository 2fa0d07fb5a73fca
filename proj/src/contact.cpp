#include "juggle/contact.hpp"

#include <algorithm>
#include <cmath>

namespace juggle {

void RacketGeometry::validate() const {
  if (!(sweet_radius > 0.0) || !(sweet_radius <= disc_radius)) {
    throw ConfigError("racket: require 0 < sweet_radius <= disc_radius");
  }
  if (std::abs(normal_body.norm() - 1.0) > 1e-9) throw ConfigError("racket.normal_body must be unit length");
  if (!offset_body.allFinite()) throw ConfigError("racket.offset_body must be finite");
}

RacketGeometry RacketGeometry::sweetSpotOnly() {
  RacketGeometry g;
  g.disc_radius = 0.055;
  g.sweet_radius = 0.055;
  return g;
}

Eigen::Vector3d RacketGeometry::centerWorld(const QuadState& quad) const {
  return quad.position + quad.attitude * offset_body;
}

Eigen::Vector3d RacketGeometry::normalWorld(const QuadState& quad) const {
  return quad.attitude * normal_body;
}

void RestitutionModel::validate() const {
  auto ok = [](double e) { return e > 0.0 && e <= 1.0; };
  if (!ok(e_sweet) || !ok(e_outer)) throw ConfigError("restitution: coefficients must lie in (0, 1]");
  if (e_override && !ok(*e_override)) throw ConfigError("restitution: override must lie in (0, 1]");
}

double RestitutionModel::coefficient(double d_axis, const RacketGeometry& geom) const {
  if (e_override) return *e_override;
  return d_axis <= geom.sweet_radius ? e_sweet : e_outer;
}

void TaskWindows::validate() const {
  if (!(z_hit_min < z_hit_max)) throw ConfigError("windows: z_hit_min must be < z_hit_max");
  if (!(z_apex_min < z_apex_max)) throw ConfigError("windows: z_apex_min must be < z_apex_max");
}

std::optional<Contact> detectContact(const QuadState& quad_prev, const QuadState& quad_next,
                                     const BallState& ball_prev, const BallState& ball_next,
                                     const RacketGeometry& geom, double ball_radius, double dt) {
  const Eigen::Vector3d c0 = geom.centerWorld(quad_prev);
  const Eigen::Vector3d c1 = geom.centerWorld(quad_next);
  const Eigen::Vector3d n0 = geom.normalWorld(quad_prev);
  const Eigen::Vector3d n1 = geom.normalWorld(quad_next);

  const double s0 = (ball_prev.position - c0).dot(n0) - ball_radius;
  const double s1 = (ball_next.position - c1).dot(n1) - ball_radius;
  if (s0 < -kPenetrationAllowance * ball_radius || s1 >= 0.0) return std::nullopt;

  const double alpha = s0 <= 0.0 ? 0.0 : std::clamp(s0 / (s0 - s1), 0.0, 1.0);
  const Eigen::Vector3d center = c0 + alpha * (c1 - c0);
  const Eigen::Vector3d normal = (n0 + alpha * (n1 - n0)).normalized();
  const Eigen::Vector3d ball_pos = ball_prev.position + alpha * (ball_next.position - ball_prev.position);
  const Eigen::Vector3d ball_vel = ball_prev.velocity + alpha * (ball_next.velocity - ball_prev.velocity);

  const Eigen::Vector3d rel = ball_pos - center;
  const Eigen::Vector3d radial = rel - rel.dot(normal) * normal;
  const double d_axis = radial.norm();
  if (d_axis > geom.disc_radius) return std::nullopt;

  const Eigen::Vector3d contact_point = center + radial;
  const Eigen::Vector3d quad_pos = quad_prev.position + alpha * (quad_next.position - quad_prev.position);
  const Eigen::Vector3d quad_vel = quad_prev.velocity + alpha * (quad_next.velocity - quad_prev.velocity);
  const Eigen::Vector3d rates = quad_prev.body_rates + alpha * (quad_next.body_rates - quad_prev.body_rates);
  const Eigen::Quaterniond att = quad_prev.attitude.slerp(alpha, quad_next.attitude);
  const Eigen::Vector3d racket_vel = quad_vel + (att * rates).cross(contact_point - quad_pos);

  if ((ball_vel - racket_vel).dot(normal) > -kMinClosingSpeed) return std::nullopt;

  (void)dt;
  Contact c;
  c.fraction = alpha;
  c.point = contact_point;
  c.ball_center = ball_pos;
  c.ball_velocity = ball_vel;
  c.racket_velocity = racket_vel;
  c.normal = normal;
  c.d_axis = d_axis;
  return c;
}

std::optional<Contact> detectContact(const QuadState& quad, const BallState& ball_prev,
                                     const BallState& ball_next, const RacketGeometry& geom,
                                     double ball_radius, double dt) {
  return detectContact(quad, quad, ball_prev, ball_next, geom, ball_radius, dt);
}

Eigen::Vector3d reboundVelocity(const Eigen::Vector3d& v_in, const Eigen::Vector3d& racket_velocity,
                                const Eigen::Vector3d& normal, double restitution) {
  const double closing = (v_in - racket_velocity).dot(normal);
  return v_in - ((1.0 + restitution) * closing) * normal;
}

BallState resolveImpact(const Contact& contact, const RestitutionModel& model,
                        const RacketGeometry& geom) {
  const double e = model.coefficient(contact.d_axis, geom);
  return {contact.ball_center,
          reboundVelocity(contact.ball_velocity, contact.racket_velocity, contact.normal, e)};
}

bool classifyHit(double z_hit, const TaskWindows& windows) {
  return windows.z_hit_min <= z_hit && z_hit <= windows.z_hit_max;
}

bool classifyApex(double z_apex, const TaskWindows& windows) {
  return windows.z_apex_min <= z_apex && z_apex <= windows.z_apex_max;
}

std::optional<ApexEvent> ApexTracker::observe(const BallState& prev, const BallState& next,
                                              double t_prev, double dt,
                                              const TaskWindows& windows) {
  if (!armed_) return std::nullopt;
  const double v0 = prev.velocity.z();
  const double v1 = next.velocity.z();
  if (!(v0 > 0.0 && v1 <= 0.0)) return std::nullopt;

  // Linear v_z over the substep: constant acceleration a, zero crossing at tau.
  const double a = (v1 - v0) / dt;
  const double tau = dt * v0 / (v0 - v1);
  ApexEvent ev;
  ev.time = t_prev + tau;
  ev.z_apex = prev.position.z() + v0 * tau + 0.5 * a * tau * tau;
  ev.apex_valid = classifyApex(ev.z_apex, windows);
  armed_ = false;
  return ev;
}

}  // namespace juggle
