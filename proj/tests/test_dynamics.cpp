#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "juggle/dynamics.hpp"

using namespace juggle;

namespace {

QuadState randomState(std::mt19937_64& rng, const QuadParams& p) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  QuadState s;
  s.position = {u(rng), u(rng), 1.0 + u(rng)};
  s.attitude = Eigen::Quaterniond(u(rng), u(rng), u(rng), u(rng)).normalized();
  s.velocity = {u(rng), u(rng), u(rng)};
  s.body_rates = {3 * u(rng), 3 * u(rng), 3 * u(rng)};
  for (int j = 0; j < 4; ++j) s.rotor_speeds[j] = p.max_rotor_speed * 0.5 * (1.0 + u(rng));
  return s;
}

double ballEnergy(const BallState& b, const BallParams& p) {
  return 0.5 * p.mass * b.velocity.squaredNorm() + p.mass * kGravity * b.position.z();
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("hover rotor speed solves four-rotor thrust balance") {
  const QuadParams p;
  const double expected = std::sqrt(1.090 * 9.81 / (4.0 * 5.39e-6));
  CHECK(p.hoverRotorSpeed() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(p.hoverRotorSpeed() == doctest::Approx(704.2).epsilon(1e-4));
}

TEST_CASE("hover is an equilibrium of the rigid-body model") {
  const QuadParams p;
  const QuadState s = hoverState({0.3, -0.2, 1.0}, p);
  const QuadDerivative d = quadDerivative(s, p, s.rotor_speeds);
  CHECK(d.position.norm() == doctest::Approx(0.0));
  CHECK(d.velocity.norm() < 1e-12);
  CHECK(d.body_rates.norm() < 1e-12);
  CHECK(d.attitude.norm() < 1e-15);
  CHECK(d.rotor_speeds.norm() < 1e-12);
}

TEST_CASE("zero thrust gives free fall and torque-free Euler dynamics") {
  const QuadParams p;
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    QuadState s = randomState(rng, p);
    s.rotor_speeds.setZero();
    const QuadDerivative d = quadDerivative(s, p, RotorVector::Zero());
    CHECK((d.velocity - Eigen::Vector3d(0, 0, -9.81)).norm() < 1e-12);
    const Eigen::Vector3d I = p.inertia;
    const Eigen::Vector3d w = s.body_rates;
    const Eigen::Vector3d expected = -(w.cross(I.cwiseProduct(w))).cwiseQuotient(I);
    CHECK((d.body_rates - expected).norm() < 1e-12);
  }
}

TEST_CASE("equal rotor speeds on a symmetric layout produce no torque") {
  const QuadParams p;
  const auto [force, torque] = propellerWrench(RotorVector::Constant(800.0), p);
  CHECK(torque.norm() < 1e-12);
  CHECK(force.z() == doctest::Approx(4 * p.thrust_coeff * 800.0 * 800.0));
  CHECK(std::abs(force.x()) + std::abs(force.y()) == 0.0);
}

TEST_CASE("wrench matches per-rotor lever arms and spin directions") {
  const QuadParams p;
  const RotorVector w{600.0, 700.0, 800.0, 900.0};
  Eigen::Vector3d torque = Eigen::Vector3d::Zero();
  for (int j = 0; j < 4; ++j) {
    const double f = p.thrust_coeff * w[j] * w[j];
    torque += p.rotor_positions[j].cross(Eigen::Vector3d(0, 0, f));
    torque.z() += p.rotor_spin_dirs[j] * p.drag_torque_coeff * w[j] * w[j];
  }
  const auto [force, tau] = propellerWrench(w, p);
  CHECK((tau - torque).norm() < 1e-12);
}

TEST_CASE("rotor command clamping") {
  const QuadParams p;
  const RotorVector c = clampRotorSpeeds(RotorVector{-5.0, 100.0, 2000.0, 1200.0}, p);
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 100.0);
  CHECK(c[2] == p.max_rotor_speed);
  CHECK(c[3] == p.max_rotor_speed);
}

TEST_CASE("ball drag deceleration") {
  BallParams bp;
  BallState b{{0, 0, 2}, {0, 0, 0}};
  CHECK((ballDerivative(b, bp).velocity - gravityWorld()).norm() == 0.0);
  bp.drag_enabled = true;
  b.velocity = {0, 0, -10};
  const double k = 0.5 * 1.204 * 0.47 * std::numbers::pi * 0.02 * 0.02 / 0.0472;
  CHECK(ballDerivative(b, bp).velocity.z() == doctest::Approx(-9.81 + k * 100.0).epsilon(1e-12));
  CHECK(ballDerivative(b, bp).velocity.z() == doctest::Approx(-9.057).epsilon(1e-3));
}

TEST_CASE("free fall from rest for 0.1 s") {
  const BallParams bp;
  BallState b{{0, 0, 2}, {0, 0, 0}};
  for (int i = 0; i < 40; ++i) b = integrateBall(b, bp, 1.0 / 400.0);
  CHECK(b.velocity.z() == doctest::Approx(-0.981).epsilon(1e-12));
  CHECK(b.position.z() == doctest::Approx(2.0 - 0.5 * 9.81 * 0.01).epsilon(1e-12));
}

TEST_CASE("drag-free flight conserves mechanical energy") {
  const BallParams bp;
  BallState b{{0.1, 0.2, 1.0}, {1.0, -0.5, 12.0}};
  const double e0 = ballEnergy(b, bp);
  for (int i = 0; i < 2000; ++i) {
    b = integrateBall(b, bp, 1.0 / 400.0);
    REQUIRE(std::abs(ballEnergy(b, bp) - e0) < 1e-6);
  }
}

TEST_CASE("drag never adds energy") {
  BallParams bp;
  bp.drag_enabled = true;
  BallState b{{0, 0, 1.0}, {2.0, 0.0, 12.0}};
  double e = ballEnergy(b, bp);
  for (int i = 0; i < 2000; ++i) {
    b = integrateBall(b, bp, 1.0 / 400.0);
    const double next = ballEnergy(b, bp);
    REQUIRE(next <= e + 1e-12);
    e = next;
  }
}

TEST_CASE("quaternion stays unit after every substep") {
  const QuadParams p;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, p.max_rotor_speed);
  QuadState s = randomState(rng, p);
  for (int i = 0; i < 4000; ++i) {
    const RotorVector cmd{u(rng), u(rng), u(rng), u(rng)};
    s = integrateQuad(s, p, cmd, 1.0 / 400.0);
    REQUIRE(std::abs(s.attitude.norm() - 1.0) < 1e-9);
    REQUIRE((s.rotor_speeds.array() >= 0.0).all());
    REQUIRE((s.rotor_speeds.array() <= p.max_rotor_speed).all());
  }
}

TEST_CASE("small yaw torque spins up linearly") {
  QuadParams p;
  p.motor_time_constant = 1e-9;  // rotors follow commands instantly
  QuadState s = hoverState({0, 0, 1}, p);
  const double dw = 5.0;
  RotorVector cmd = s.rotor_speeds;
  for (int j = 0; j < 4; ++j) cmd[j] += p.rotor_spin_dirs[j] * dw;
  s.rotor_speeds = cmd;
  const double tau_z = propellerWrench(cmd, p).second.z();
  for (int i = 0; i < 40; ++i) s = integrateQuad(s, p, cmd, 1.0 / 400.0);
  CHECK(s.body_rates.z() == doctest::Approx(tau_z / p.inertia.z() * 0.1).epsilon(1e-4));
}

TEST_CASE("derivative is a pure function") {
  const QuadParams p;
  std::mt19937_64 rng(5);
  const QuadState s = randomState(rng, p);
  const RotorVector cmd{500, 600, 700, 800};
  const QuadDerivative a = quadDerivative(s, p, cmd);
  const QuadDerivative b = quadDerivative(s, p, cmd);
  CHECK(a.velocity == b.velocity);
  CHECK(a.body_rates == b.body_rates);
  CHECK(a.attitude == b.attitude);
}

TEST_CASE("RK4 error shrinks at fourth order") {
  const QuadParams p;
  std::mt19937_64 rng(8);
  const QuadState s0 = randomState(rng, p);
  const RotorVector cmd{650, 720, 690, 710};
  auto run = [&](int n) {
    QuadState s = s0;
    for (int i = 0; i < n; ++i) s = integrateQuad(s, p, cmd, 0.2 / n);
    return s;
  };
  const QuadState ref = run(3200);
  const double e1 = (run(25).position - ref.position).norm();
  const double e2 = (run(50).position - ref.position).norm();
  CHECK(e1 / e2 > 10.0);
}

TEST_CASE("parameter validation") {
  QuadParams p;
  p.mass = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = QuadParams{};
  p.rotor_spin_dirs = {1, 1, 1, -1};
  CHECK_THROWS_AS(p.validate(), ConfigError);
  BallParams b;
  b.radius = -1.0;
  CHECK_THROWS_AS(b.validate(), ConfigError);
}

TEST_CASE("non-finite states are rejected") {
  const QuadParams p;
  QuadState s = hoverState({0, 0, 1}, p);
  s.velocity.x() = std::nan("");
  CHECK_THROWS_AS(integrateQuad(s, p, s.rotor_speeds, 1.0 / 400.0), StateError);
}

}  // TEST_SUITE
