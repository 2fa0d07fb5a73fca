#include <cmath>
#include <random>

#include "doctest.h"
#include "juggle/contact.hpp"

using namespace juggle;

namespace {

constexpr double kDt = 1.0 / 400.0;

// Ball states one substep apart that straddle the racket face at `xy`.
std::pair<BallState, BallState> crossing(const QuadState& quad, const RacketGeometry& g, double radius,
                                         Eigen::Vector2d xy, double vz) {
  const double face = g.centerWorld(quad).z();
  BallState a{{xy.x(), xy.y(), face + radius + 0.004}, {0, 0, vz}};
  BallState b{{xy.x(), xy.y(), face + radius + 0.004 + vz * kDt}, {0, 0, vz}};
  return {a, b};
}

}  // namespace

TEST_SUITE("contact") {

TEST_CASE("descending ball through the racket centre") {
  const QuadParams qp;
  const QuadState quad = hoverState({0, 0, 1}, qp);
  const RacketGeometry g;
  const auto [a, b] = crossing(quad, g, 0.02, {0, 0}, -3.0);
  const auto c = detectContact(quad, a, b, g, 0.02, kDt);
  REQUIRE(c.has_value());
  CHECK(c->d_axis == doctest::Approx(0.0));
  CHECK(c->fraction == doctest::Approx(0.004 / (3.0 * kDt)).epsilon(1e-9));
  CHECK(c->ball_center.z() == doctest::Approx(g.centerWorld(quad).z() + 0.02).epsilon(1e-12));
}

TEST_CASE("path outside the disc misses") {
  const QuadState quad = hoverState({0, 0, 1}, QuadParams{});
  const RacketGeometry g = RacketGeometry::sweetSpotOnly();
  const auto [a, b] = crossing(quad, g, 0.02, {0.07, 0.0}, -3.0);
  CHECK_FALSE(detectContact(quad, a, b, g, 0.02, kDt).has_value());
  const auto [c, d] = crossing(quad, g, 0.02, {0.05, 0.0}, -3.0);
  CHECK(detectContact(quad, c, d, g, 0.02, kDt).has_value());
}

TEST_CASE("separating ball is not a contact") {
  const QuadState quad = hoverState({0, 0, 1}, QuadParams{});
  const RacketGeometry g;
  auto [a, b] = crossing(quad, g, 0.02, {0, 0}, -3.0);
  std::swap(a, b);
  a.velocity.z() = b.velocity.z() = 3.0;
  CHECK_FALSE(detectContact(quad, a, b, g, 0.02, kDt).has_value());
}

TEST_CASE("racket rising into a resting ball still registers") {
  const QuadParams qp;
  const RacketGeometry g;
  QuadState q0 = hoverState({0, 0, 1}, qp);
  QuadState q1 = q0;
  q1.position.z() += 0.01;
  q0.velocity.z() = q1.velocity.z() = 4.0;
  const double face = g.centerWorld(q0).z();
  BallState b{{0, 0, face + 0.02 + 0.005}, {0, 0, 0}};
  const auto c = detectContact(q0, q1, b, b, g, 0.02, kDt);
  REQUIRE(c.has_value());
  CHECK(c->fraction == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(c->racket_velocity.z() == doctest::Approx(4.0));
}

TEST_CASE("rebound from a static level racket") {
  const Eigen::Vector3d v = reboundVelocity({0, 0, -3}, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ(), 0.82);
  CHECK(v.z() == doctest::Approx(2.46).epsilon(1e-12));
  CHECK(v.head<2>().norm() == 0.0);
}

TEST_CASE("rebound from a rising racket") {
  const Eigen::Vector3d v = reboundVelocity({0, 0, -6.26}, {0, 0, 0.62}, Eigen::Vector3d::UnitZ(), 0.82);
  CHECK(v.z() == doctest::Approx(0.62 + 0.82 * (0.62 + 6.26)).epsilon(1e-12));
  CHECK(v.z() == doctest::Approx(6.26).epsilon(1e-2));
}

TEST_CASE("restitution depends only on distance from the axis") {
  const RacketGeometry g;
  RestitutionModel m;
  CHECK(m.coefficient(0.0, g) == 0.82);
  CHECK(m.coefficient(0.055, g) == 0.82);
  CHECK(m.coefficient(0.07, g) == 0.64);
  m.e_override = 0.7;
  CHECK(m.coefficient(0.07, g) == 0.7);
}

TEST_CASE("impact law on random tilted faces") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const Eigen::Vector3d n = Eigen::Vector3d(0.3 * u(rng), 0.3 * u(rng), 1.0).normalized();
    const Eigen::Vector3d vr{u(rng), u(rng), 2 * u(rng)};
    Eigen::Vector3d vin{u(rng), u(rng), -5.0 + u(rng)};
    const double e = 0.6 + 0.3 * (u(rng) + 1) / 2;
    const Eigen::Vector3d vout = reboundVelocity(vin, vr, n, e);
    const double in_n = (vin - vr).dot(n);
    const double out_n = (vout - vr).dot(n);
    REQUIRE(out_n == doctest::Approx(-e * in_n).epsilon(1e-12));
    const Eigen::Vector3d t_in = (vin - vr) - in_n * n;
    const Eigen::Vector3d t_out = (vout - vr) - out_n * n;
    REQUIRE((t_in - t_out).norm() < 1e-12);
  }
}

TEST_CASE("level face keeps tangential velocity bitwise") {
  const QuadState quad = hoverState({0, 0, 1}, QuadParams{});
  const RacketGeometry g;
  auto [a, b] = crossing(quad, g, 0.02, {0.01, -0.02}, -4.0);
  a.velocity.x() = b.velocity.x() = 0.123456789;
  a.velocity.y() = b.velocity.y() = -0.3;
  b.position.x() += 0.123456789 * kDt;
  b.position.y() -= 0.3 * kDt;
  const auto c = detectContact(quad, a, b, g, 0.02, kDt);
  REQUIRE(c.has_value());
  const BallState out = resolveImpact(*c, RestitutionModel{}, g);
  CHECK(out.velocity.x() == c->ball_velocity.x());
  CHECK(out.velocity.y() == c->ball_velocity.y());
}

TEST_CASE("window classification is closed") {
  const TaskWindows w;
  CHECK(classifyHit(1.0, w));
  CHECK_FALSE(classifyHit(1.5, w));
  CHECK(classifyHit(w.z_hit_max, w));
  CHECK(classifyHit(w.z_hit_min, w));
  CHECK(classifyApex(3.0, w));
  CHECK_FALSE(classifyApex(3.21, w));
}

TEST_CASE("apex after a strike") {
  const BallParams bp;
  BallState b{{0, 0, 1.0}, {0, 0, 6.26}};
  ApexTracker tracker;
  tracker.arm();
  std::optional<ApexEvent> apex;
  int events = 0;
  for (int i = 0; i < 600; ++i) {
    const BallState next = integrateBall(b, bp, kDt);
    if (auto a = tracker.observe(b, next, i * kDt, kDt, TaskWindows{})) {
      apex = a;
      ++events;
    }
    b = next;
  }
  REQUIRE(apex.has_value());
  CHECK(events == 1);
  CHECK(apex->z_apex == doctest::Approx(1.0 + 6.26 * 6.26 / (2 * 9.81)).epsilon(1e-9));
  CHECK(apex->z_apex == doctest::Approx(2.997).epsilon(1e-3));
  CHECK(apex->time == doctest::Approx(6.26 / 9.81).epsilon(1e-9));
  CHECK(apex->apex_valid);
}

TEST_CASE("descending ball never reports an apex") {
  const BallParams bp;
  BallState b{{0, 0, 3.0}, {0, 0, -0.5}};
  ApexTracker tracker;
  tracker.arm();
  for (int i = 0; i < 200; ++i) {
    const BallState next = integrateBall(b, bp, kDt);
    REQUIRE_FALSE(tracker.observe(b, next, i * kDt, kDt, TaskWindows{}).has_value());
    b = next;
  }
}

TEST_CASE("drop test reproduces e squared h") {
  for (double e : {0.64, 0.82}) {
    for (double h : {0.5, 1.0, 2.0}) {
      const QuadState quad = hoverState({0, 0, 1}, QuadParams{});
      const RacketGeometry g;
      const BallParams bp;
      RestitutionModel m;
      m.e_override = e;
      const double face = g.centerWorld(quad).z();
      BallState b{{0, 0, face + bp.radius + h}, {0, 0, 0}};
      ApexTracker tracker;
      std::optional<double> apex;
      double z_contact = 0;
      for (int i = 0; i < 4000 && !apex; ++i) {
        BallState next = integrateBall(b, bp, kDt);
        if (auto c = detectContact(quad, b, next, g, bp.radius, kDt)) {
          z_contact = c->ball_center.z();
          next = integrateBall(resolveImpact(*c, m, g), bp, (1 - c->fraction) * kDt);
          tracker.arm();
        } else if (auto a = tracker.observe(b, next, i * kDt, kDt, TaskWindows{})) {
          apex = a->z_apex;
        }
        b = next;
      }
      REQUIRE(apex.has_value());
      CHECK(std::abs((*apex - z_contact) - e * e * h) < 1e-3 * h);
    }
  }
}

TEST_CASE("geometry validation") {
  RacketGeometry g;
  g.sweet_radius = 0.2;
  CHECK_THROWS_AS(g.validate(), ConfigError);
  RestitutionModel m;
  m.e_sweet = 1.5;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  TaskWindows w;
  w.z_apex_min = 4.0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

}  // TEST_SUITE
