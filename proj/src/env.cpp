#include "juggle/env.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

namespace juggle {

namespace {

void requireRange(const Range& r, const char* name) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || !(r.lo <= r.hi)) {
    throw ConfigError(std::string("dr.") + name + ": require finite lo <= hi");
  }
}

double sample(std::mt19937_64& rng, const Range& r) {
  // Portable uniform draw; a degenerate range returns lo exactly.
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return r.lo + (r.hi - r.lo) * u;
}

}  // namespace

void DomainRandomization::validate() const {
  requireRange(restitution, "restitution");
  requireRange(ball_z, "ball_z");
  requireRange(quad_z, "quad_z");
  requireRange(ball_xy, "ball_xy");
  requireRange(quad_xy, "quad_xy");
  if (restitution.lo <= 0.0 || restitution.hi > 1.0) {
    throw ConfigError("dr.restitution must lie in (0, 1]");
  }
}

void Workspace::validate() const {
  if (!(xy_limit > 0.0)) throw ConfigError("workspace.xy_limit must be > 0");
  if (!(quad_z_min < quad_z_max)) throw ConfigError("workspace: quad_z_min must be < quad_z_max");
  if (!(ball_z_max > 0.0)) throw ConfigError("workspace.ball_z_max must be > 0");
}

void EnvConfig::validate() const {
  quad.validate();
  ball.validate();
  racket.validate();
  restitution.validate();
  windows.validate();
  dr.validate();
  control.validate();
  workspace.validate();
  if (!(control_hz > 0.0)) throw ConfigError("env.control_hz must be > 0");
  if (physics_substeps < 1) throw ConfigError("env.physics_substeps must be >= 1");
  if (max_steps < 1) throw ConfigError("env.max_steps must be >= 1");
  if (!(contact_refractory >= 0.0)) throw ConfigError("env.contact_refractory must be >= 0");
}

std::array<double, kCriticObsDim> Observation::critic() const {
  std::array<double, kCriticObsDim> out{};
  std::copy(actor.begin(), actor.end(), out.begin());
  out[kActorObsDim] = time_fraction;
  return out;
}

RewardBreakdown computeReward(const RewardInputs& in, const RewardToggles& toggles) {
  RewardBreakdown r;
  r.r_hit = in.hit ? 50.0 : 0.0;
  r.r_apex = in.apex ? 50.0 : 0.0;
  if (toggles.r_rpos) r.r_rpos = 1.0 / (1.0 + std::max(in.d_xy, 0.2));
  if (toggles.r_contact && in.hit) r.r_contact = 10.0 * std::exp(-5.0 * in.d_axis);
  if (toggles.r_xy) r.r_xy = -1.0 * in.d_quad;
  if (toggles.r_smooth) r.r_smooth = 2.0 * std::exp(-in.action_delta);
  if (toggles.r_spin) r.r_spin = -10.0 * std::abs(in.yaw);
  r.total = r.r_hit + r.r_apex + r.r_rpos + r.r_contact + r.r_xy + r.r_smooth + r.r_spin;
  return r;
}

std::string_view toString(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::kNone: return "none";
    case TerminationReason::kGround: return "ground";
    case TerminationReason::kBallOutOfBounds: return "ball_out_of_bounds";
    case TerminationReason::kQuadOutOfBounds: return "quad_out_of_bounds";
    case TerminationReason::kTruncated: return "truncated";
  }
  return "unknown";
}

EpisodeInit sampleEpisodeInit(const EnvConfig& cfg, std::uint64_t seed) {
  const DomainRandomization& dr = cfg.dr;
  std::mt19937_64 rng(seed);
  // Draw order is fixed so a seed maps to the same episode regardless of
  // which groups are enabled.
  const double e = sample(rng, dr.restitution);
  const double ball_z = sample(rng, dr.ball_z);
  const double quad_z = sample(rng, dr.quad_z);
  const double ball_x = sample(rng, dr.ball_xy);
  const double ball_y = sample(rng, dr.ball_xy);
  const double quad_x = sample(rng, dr.quad_xy);
  const double quad_y = sample(rng, dr.quad_xy);

  EpisodeInit init;
  if (dr.randomize_restitution) init.restitution = e;
  init.ball_position.z() = dr.randomize_height ? ball_z : dr.ball_z.mid();
  const double hover_row = dr.randomize_height ? quad_z : dr.quad_z.mid();
  if (dr.randomize_horizontal) {
    init.ball_position.head<2>() = Eigen::Vector2d{ball_x, ball_y};
    init.quad_position.head<2>() = Eigen::Vector2d{quad_x, quad_y};
  } else {
    init.ball_position.head<2>().setConstant(dr.ball_xy.mid());
    init.quad_position.head<2>().setConstant(dr.quad_xy.mid());
  }
  if (dr.quad_height_row_is_y) {
    init.quad_position.y() += hover_row;
    init.quad_position.z() = 1.0;
  } else {
    init.quad_position.z() = hover_row;
  }
  return init;
}

RawAction hoverAction(const EnvConfig& cfg) {
  CtbrCommand hover;
  hover.collective_thrust = cfg.quad.mass * kGravity;
  return denormalizeAction(hover, cfg.quad, cfg.control.rate_limit);
}

JuggleEnv::JuggleEnv(EnvConfig cfg)
    : cfg_(std::move(cfg)), restitution_(cfg_.restitution), controller_(cfg_.quad, cfg_.control) {
  cfg_.validate();
}

Observation JuggleEnv::reset(std::uint64_t seed) {
  const EpisodeInit init = sampleEpisodeInit(cfg_, seed);
  quad_ = hoverState(init.quad_position, cfg_.quad);
  ball_ = BallState{init.ball_position, Eigen::Vector3d::Zero()};
  restitution_ = cfg_.restitution;
  restitution_.e_override = init.restitution;
  controller_.reset();
  apex_tracker_.disarm();

  episode_ = EpisodeState{};
  episode_.arc_peak = ball_.position.z();
  episode_.restitution = init.restitution;
  episode_.prev_action = hoverAction(cfg_);
  last_contact_time_ = -std::numeric_limits<double>::infinity();
  has_reset_ = true;
  return observe();
}

Observation JuggleEnv::observe() const {
  Observation o;
  auto& a = o.actor;
  const Eigen::Matrix3d R = quad_.rotation();
  a[0] = quad_.position.x();
  a[1] = quad_.position.y();
  a[2] = quad_.position.z();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a[3 + 3 * r + c] = R(r, c);
  }
  for (int i = 0; i < 3; ++i) {
    a[12 + i] = quad_.velocity[i];
    a[15 + i] = ball_.position[i];
    a[18 + i] = ball_.velocity[i];
    a[21 + i] = ball_.position[i] - quad_.position[i];
  }
  o.time_fraction = static_cast<double>(episode_.step) / cfg_.max_steps;
  return o;
}

void JuggleEnv::closePendingHit(bool apex_valid) {
  if (!episode_.pending_hit_valid) return;
  if (*episode_.pending_hit_valid && apex_valid) {
    ++episode_.valid_hits;
    ++episode_.streak;
    episode_.max_streak = std::max(episode_.max_streak, episode_.streak);
  } else {
    episode_.streak = 0;
  }
  episode_.pending_hit_valid.reset();
}

TerminationReason JuggleEnv::checkBounds() const {
  const Workspace& ws = cfg_.workspace;
  if (ball_.position.z() <= cfg_.ball.radius) return TerminationReason::kGround;
  if (std::abs(ball_.position.x()) > ws.xy_limit || std::abs(ball_.position.y()) > ws.xy_limit ||
      ball_.position.z() > ws.ball_z_max) {
    return TerminationReason::kBallOutOfBounds;
  }
  if (std::abs(quad_.position.x()) > ws.xy_limit || std::abs(quad_.position.y()) > ws.xy_limit ||
      quad_.position.z() < ws.quad_z_min || quad_.position.z() > ws.quad_z_max) {
    return TerminationReason::kQuadOutOfBounds;
  }
  return TerminationReason::kNone;
}

StepResult JuggleEnv::step(std::span<const double, kActionDim> action) {
  if (!has_reset_) throw UsageError("step called before reset");
  if (episode_.done) throw UsageError("step called on a finished episode; call reset");

  RawAction raw;
  for (int i = 0; i < kActionDim; ++i) raw[i] = std::clamp(action[i], -1.0, 1.0);
  const CtbrCommand cmd = normalizeAction(raw, cfg_.quad, cfg_.control.rate_limit);

  StepResult result;
  const double h = cfg_.physicsDt();
  const double r_ball = cfg_.ball.radius;
  std::optional<double> credited_d_axis;
  bool apex_hit = false;

  for (int k = 0; k < cfg_.physics_substeps; ++k) {
    const RotorVector rotor_cmd = controller_.update(cmd, quad_, h);
    const QuadState quad_next = integrateQuad(quad_, cfg_.quad, rotor_cmd, h);
    BallState ball_next = integrateBall(ball_, cfg_.ball, h);

    const auto contact = detectContact(quad_, quad_next, ball_, ball_next, cfg_.racket, r_ball, h);
    if (contact) {
      const double t_contact = episode_.time + contact->fraction * h;
      BallState post = resolveImpact(*contact, restitution_, cfg_.racket);
      const double remaining = (1.0 - contact->fraction) * h;
      if (remaining > 0.0) post = integrateBall(post, cfg_.ball, remaining);
      // Keep the ball on the face side of the racket's end-of-step pose.
      const Eigen::Vector3d n1 = cfg_.racket.normalWorld(quad_next);
      const double gap = (post.position - cfg_.racket.centerWorld(quad_next)).dot(n1) - r_ball;
      if (gap < 0.0) post.position -= gap * n1;
      ball_next = post;

      if (t_contact - last_contact_time_ >= cfg_.contact_refractory) {
        // A new contact ends the current arc; an unresolved hit never reached its apex.
        closePendingHit(false);
        HitEvent ev;
        ev.time = t_contact;
        ev.contact_point_world = contact->point;
        ev.d_axis = contact->d_axis;
        ev.ball_velocity_in = contact->ball_velocity;
        ev.ball_velocity_out = post.velocity;
        ev.racket_velocity = contact->racket_velocity;
        ev.restitution = restitution_.coefficient(contact->d_axis, cfg_.racket);
        ev.hit_valid = classifyHit(contact->point.z(), cfg_.windows);
        const bool live_arc = episode_.release_arc || episode_.arc_peak >= cfg_.windows.z_apex_min ||
                              !cfg_.hit_credit_requires_live_arc;
        ev.credited = ev.hit_valid && live_arc;
        if (ev.credited && !credited_d_axis) credited_d_axis = ev.d_axis;
        result.hits.push_back(ev);

        ++episode_.contacts;
        episode_.pending_hit_valid = ev.hit_valid;
        episode_.release_arc = false;
        episode_.arc_peak = contact->ball_center.z();
        apex_tracker_.arm();
      }
      last_contact_time_ = t_contact;
    } else if (auto apex = apex_tracker_.observe(ball_, ball_next, episode_.time, h, cfg_.windows)) {
      result.apexes.push_back(*apex);
      apex_hit = apex_hit || apex->apex_valid;
      closePendingHit(apex->apex_valid);
    }

    quad_ = quad_next;
    ball_ = ball_next;
    episode_.time += h;
    episode_.arc_peak = std::max(episode_.arc_peak, ball_.position.z());

    const TerminationReason reason = checkBounds();
    if (reason != TerminationReason::kNone) {
      result.terminated = true;
      result.reason = reason;
      break;
    }
  }

  ++episode_.step;
  if (!result.terminated && episode_.step >= cfg_.max_steps) {
    result.truncated = true;
    result.reason = TerminationReason::kTruncated;
  }

  RewardInputs in;
  in.d_xy = (ball_.position.head<2>() - quad_.position.head<2>()).norm();
  in.d_quad = quad_.position.head<2>().norm();
  in.yaw = yawOf(quad_.rotation());
  double delta2 = 0.0;
  for (int i = 0; i < kActionDim; ++i) delta2 += (raw[i] - episode_.prev_action[i]) * (raw[i] - episode_.prev_action[i]);
  in.action_delta = std::sqrt(delta2);
  in.hit = credited_d_axis.has_value();
  in.d_axis = credited_d_axis.value_or(0.0);
  in.apex = apex_hit;
  result.reward = computeReward(in, cfg_.rewards);

  episode_.prev_action = raw;
  episode_.episode_return += result.reward.total;
  if (result.terminated || result.truncated) {
    episode_.done = true;
    episode_.reason = result.reason;
  }
  result.obs = observe();
  return result;
}

std::uint64_t deriveSeed(std::uint64_t root, std::uint64_t index) {
  // splitmix64 finalizer over (root, index)
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

VecEnv::VecEnv(const EnvConfig& cfg, std::uint64_t root_seed, int num_envs, int workers)
    : VecEnv(cfg,
             [&] {
               if (num_envs < 1) throw ConfigError("VecEnv requires at least one environment");
               std::vector<std::uint64_t> seeds(num_envs);
               for (int i = 0; i < num_envs; ++i) seeds[i] = deriveSeed(root_seed, i);
               return seeds;
             }(),
             workers) {}

VecEnv::VecEnv(const EnvConfig& cfg, std::vector<std::uint64_t> env_seeds, int workers)
    : workers_(std::max(1, workers)) {
  if (env_seeds.empty()) throw ConfigError("VecEnv requires at least one environment");
  const int n = static_cast<int>(env_seeds.size());
  envs_.reserve(n);
  for (int i = 0; i < n; ++i) {
    envs_.emplace_back(cfg);
    seed_streams_.emplace_back(env_seeds[i]);
  }
  obs_.setZero(kActorObsDim, n);
  time_fraction_.setZero(n);
  rewards_.setZero(n);
  terminated_.assign(n, 0);
  truncated_.assign(n, 0);
  final_obs_.setZero(kActorObsDim, n);
  final_time_fraction_.setZero(n);
  finished_.assign(n, std::nullopt);
}

void VecEnv::writeObservation(int i, const Observation& obs) {
  obs_.col(i) = Eigen::Map<const Eigen::VectorXd>(obs.actor.data(), kActorObsDim);
  time_fraction_[i] = obs.time_fraction;
}

void VecEnv::resetAll() {
  for (int i = 0; i < size(); ++i) writeObservation(i, envs_[i].reset(seed_streams_[i]()));
  rewards_.setZero();
  std::fill(terminated_.begin(), terminated_.end(), 0);
  std::fill(truncated_.begin(), truncated_.end(), 0);
}

void VecEnv::stepRange(const Eigen::MatrixXd& actions, int begin, int end) {
  for (int i = begin; i < end; ++i) {
    std::array<double, kActionDim> a;
    for (int k = 0; k < kActionDim; ++k) a[k] = actions(k, i);
    const StepResult r = envs_[i].step(a);
    rewards_[i] = r.reward.total;
    terminated_[i] = r.terminated;
    truncated_[i] = r.truncated;
    if (r.terminated || r.truncated) {
      final_obs_.col(i) = Eigen::Map<const Eigen::VectorXd>(r.obs.actor.data(), kActorObsDim);
      final_time_fraction_[i] = r.obs.time_fraction;
      const EpisodeState& ep = envs_[i].episode();
      finished_[i] = EpisodeStats{i, ep.episode_return, ep.step, ep.max_streak, ep.valid_hits, r.reason};
      writeObservation(i, envs_[i].reset(seed_streams_[i]()));
    } else {
      writeObservation(i, r.obs);
    }
  }
}

void VecEnv::stepAll(const Eigen::MatrixXd& actions) {
  if (actions.rows() != kActionDim || actions.cols() != size()) {
    throw UsageError("VecEnv::stepAll: action matrix must be 4 x num_envs");
  }
  const int n = size();
  const int w = std::min(workers_, n);
  if (w <= 1) {
    stepRange(actions, 0, n);
    return;
  }
  std::vector<std::jthread> pool;
  const int chunk = (n + w - 1) / w;
  for (int t = 0; t < w; ++t) {
    const int b = t * chunk;
    const int e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back([this, &actions, b, e] { stepRange(actions, b, e); });
  }
}

std::vector<EpisodeStats> VecEnv::drainEpisodeStats() {
  std::vector<EpisodeStats> out;
  for (auto& f : finished_) {
    if (f) out.push_back(*f);
    f.reset();
  }
  return out;
}

}  // namespace juggle
