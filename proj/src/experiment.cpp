#include "juggle/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace juggle {

HitStats summarizeHits(const std::vector<int>& hits) {
  HitStats s;
  if (hits.empty()) return s;
  const double n = static_cast<double>(hits.size());
  s.mean = std::accumulate(hits.begin(), hits.end(), 0.0) / n;
  double ss = 0.0;
  for (int h : hits) ss += (h - s.mean) * (h - s.mean);
  s.std = std::sqrt(ss / n);
  auto [lo, hi] = std::minmax_element(hits.begin(), hits.end());
  s.min = *lo;
  s.max = *hi;
  std::vector<int> sorted = hits;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size() / 2;
  s.median = sorted.size() % 2 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
  return s;
}

std::vector<int> EvalReport::hits() const {
  std::vector<int> h;
  h.reserve(episodes.size());
  for (const auto& e : episodes) h.push_back(e.hits);
  return h;
}

namespace {

std::string eventsOf(const StepResult& r) {
  std::string ev;
  auto add = [&](std::string_view s) {
    if (!ev.empty()) ev += ';';
    ev += s;
  };
  for (const auto& h : r.hits) add(h.hit_valid ? "hit" : "contact");
  for (const auto& a : r.apexes) add(a.apex_valid ? "apex" : "apex_out");
  if (r.terminated || r.truncated) add(toString(r.reason));
  return ev;
}

TrajectoryRow rowOf(const JuggleEnv& env, const RawAction& action, const StepResult& r) {
  return {env.episode().time, env.quad(), env.ball(), action, r.reward, eventsOf(r)};
}

EpisodeOutcome outcomeOf(int index, const JuggleEnv& env) {
  const EpisodeState& ep = env.episode();
  return {index, ep.max_streak, ep.valid_hits, ep.step, ep.episode_return, ep.reason};
}

void finalize(EvalReport& report, const EnvConfig& env_cfg, std::chrono::steady_clock::time_point t0) {
  report.release_height = env_cfg.dr.ball_z.mid();
  report.ball_mass = env_cfg.ball.mass;
  report.stats = summarizeHits(report.hits());
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void writeTrajectoryCsv(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
  out << "t_s,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz,bpx,bpy,bpz,bvx,bvy,bvz,a0,a1,a2,a3,"
         "r_hit,r_apex,r_rpos,r_contact,r_xy,r_smooth,r_spin,r_total,event\n";
  for (const auto& r : rows) {
    const auto& q = r.quad;
    const double vals[] = {r.t,
                           q.position.x(), q.position.y(), q.position.z(),
                           q.attitude.w(), q.attitude.x(), q.attitude.y(), q.attitude.z(),
                           q.velocity.x(), q.velocity.y(), q.velocity.z(),
                           q.body_rates.x(), q.body_rates.y(), q.body_rates.z(),
                           r.ball.position.x(), r.ball.position.y(), r.ball.position.z(),
                           r.ball.velocity.x(), r.ball.velocity.y(), r.ball.velocity.z(),
                           r.action[0], r.action[1], r.action[2], r.action[3],
                           r.reward.r_hit, r.reward.r_apex, r.reward.r_rpos, r.reward.r_contact,
                           r.reward.r_xy, r.reward.r_smooth, r.reward.r_spin, r.reward.total};
    for (double v : vals) out << formatNumber(v) << ',';
    out << r.event << '\n';
  }
}

void writeEvalCsv(std::ostream& out, const EvalReport& report) {
  out << "episode,hits,terminated_reason,steps\n";
  for (const auto& e : report.episodes) {
    out << e.episode << ',' << e.hits << ',' << toString(e.reason) << ',' << e.steps << '\n';
  }
}

EnvConfig evalEnvConfig(const ScenarioConfig& cfg, double release_height, std::optional<double> ball_mass) {
  EnvConfig e = cfg.env;
  e.max_steps = cfg.eval.max_steps;
  e.dr.ball_z = {release_height, release_height};
  if (cfg.eval.nominal_restitution) e.dr.randomize_restitution = false;
  if (ball_mass) e.ball.mass = *ball_mass;
  e.validate();
  return e;
}

std::uint64_t evalEpisodeSeed(std::uint64_t root, int episode) {
  return deriveSeed(deriveSeed(root, 0xE7A1), static_cast<std::uint64_t>(episode));
}

EvalReport evaluatePolicy(const PolicySnapshot& policy, const EnvConfig& env_cfg, int episodes,
                          std::uint64_t seed, std::vector<TrajectoryRow>* trajectory) {
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport report;
  report.method = "rl";
  std::vector<JuggleEnv> envs;
  envs.reserve(episodes);
  std::vector<int> active;
  for (int i = 0; i < episodes; ++i) {
    envs.emplace_back(env_cfg);
    envs.back().reset(evalEpisodeSeed(seed, i));
    active.push_back(i);
  }
  report.episodes.resize(episodes);
  if (trajectory) trajectory->clear();

  Eigen::MatrixXd obs(kActorObsDim, episodes);
  while (!active.empty()) {
    obs.resize(kActorObsDim, static_cast<Eigen::Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) {
      const Observation o = envs[active[k]].observe();
      for (int d = 0; d < kActorObsDim; ++d) obs(d, k) = o.actor[d];
    }
    const Eigen::MatrixXd act = policy.actDeterministic(obs);
    std::vector<int> still;
    still.reserve(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
      const int i = active[k];
      RawAction a;
      for (int d = 0; d < kActionDim; ++d) a[d] = act(d, k);
      const StepResult r = envs[i].step(a);
      if (trajectory && i == 0) trajectory->push_back(rowOf(envs[i], a, r));
      if (r.terminated || r.truncated) {
        report.episodes[i] = outcomeOf(i, envs[i]);
      } else {
        still.push_back(i);
      }
    }
    active.swap(still);
  }
  finalize(report, env_cfg, t0);
  return report;
}

EvalReport evaluateMbpp(const MbppConfig& mbpp, const EnvConfig& env_cfg, int episodes, std::uint64_t seed,
                        std::vector<TrajectoryRow>* trajectory) {
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport report;
  report.method = "mbpp";
  if (trajectory) trajectory->clear();
  JuggleEnv env(env_cfg);
  MbppAgent agent(mbpp, env_cfg);
  for (int i = 0; i < episodes; ++i) {
    const std::uint64_t s = evalEpisodeSeed(seed, i);
    env.reset(s);
    agent.reset(deriveSeed(s, 1));
    while (true) {
      const RawAction a = agent.act(env);
      const StepResult r = env.step(a);
      if (trajectory && i == 0) trajectory->push_back(rowOf(env, a, r));
      if (r.terminated || r.truncated) break;
    }
    report.episodes.push_back(outcomeOf(i, env));
  }
  finalize(report, env_cfg, t0);
  return report;
}

PolicySnapshot randomPolicy(const ScenarioConfig& cfg, std::uint64_t seed) {
  ActorCritic<double> net(kActorObsDim, kActionDim, cfg.ppo.hidden);
  net.initialize(seed, cfg.ppo.init_log_std);
  const RawAction hover = hoverAction(cfg.env);
  net.setActionBias(Eigen::Map<const Eigen::Vector4d>(hover.data()));
  return PolicySnapshot{std::move(net), ObsNormalizer(kActorObsDim), 0, 0, 0.0};
}

// ---------------------------------------------------------------- training

namespace {

int workerCount(int configured, bool deterministic) {
  if (deterministic) return 1;
  if (configured > 0) return configured;
  return std::max(1u, std::thread::hardware_concurrency());
}

PlotSpec curvePlot(const std::vector<IterationStats>& curve) {
  PlotSpec p;
  p.title = "Training progress";
  p.x_label = "environment frames";
  p.y_label = "mean consecutive hits";
  PlotSeries s;
  s.name = "hits";
  for (const auto& c : curve) {
    s.x.push_back(static_cast<double>(c.frames));
    s.y.push_back(c.mean_consecutive_hits);
  }
  p.series.push_back(std::move(s));
  return p;
}

}  // namespace

TrainResult runTraining(const ScenarioConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  std::filesystem::create_directories(opts.out_dir);
  saveConfig(cfg, opts.out_dir / "config.resolved.json");

  VecEnv venv(cfg.env, cfg.seed, cfg.train.num_envs, workerCount(cfg.train.workers, opts.deterministic));
  const RawAction hover = hoverAction(cfg.env);
  PpoTrainer trainer(venv, cfg.ppo, deriveSeed(cfg.seed, 0x7A1E), Eigen::Map<const Eigen::Vector4d>(hover.data()));
  if (opts.resume) trainer.restore(loadCheckpoint(*opts.resume));

  const int total_iters = cfg.train.iterations(cfg.ppo.rollout_length);
  std::ofstream curve_csv(opts.out_dir / "training_curve.csv", std::ios::binary);
  curve_csv << trainingCurveHeader() << '\n';

  std::ofstream eval_csv(opts.out_dir / "eval_curve.csv", std::ios::binary);
  eval_csv << "iteration,frames,mean,std,max,min\n";
  const EnvConfig eval_env = evalEnvConfig(cfg, cfg.eval.release_height);
  auto evaluate = [&] {
    const PolicySnapshot snap = trainer.snapshot();
    const HitStats s = evaluatePolicy(snap, eval_env, cfg.eval.episodes, cfg.seed).stats;
    eval_csv << snap.iterations << ',' << snap.frames << ',' << formatNumber(s.mean) << ','
             << formatNumber(s.std) << ',' << s.max << ',' << s.min << '\n';
    eval_csv.flush();
  };

  std::vector<IterationStats> curve;
  const auto t0 = std::chrono::steady_clock::now();
  auto last = t0;
  const auto ckpt = opts.out_dir / "checkpoint.ckpt";
  while (static_cast<int>(trainer.iterations()) < total_iters) {
    const IterationStats s = trainer.iterate();
    const auto now = std::chrono::steady_clock::now();
    trainer.addWallSeconds(std::chrono::duration<double>(now - last).count());
    last = now;
    curve.push_back(s);
    curve_csv << trainingCurveRow(s) << '\n';
    curve_csv.flush();
    if (opts.on_iteration) opts.on_iteration(s, std::chrono::duration<double>(now - t0).count());
    if (trainer.iterations() % cfg.train.checkpoint_every == 0) saveCheckpoint(trainer.snapshot(), ckpt);
    const bool last_iteration = static_cast<int>(trainer.iterations()) >= total_iters;
    if (cfg.train.eval_every > 0 && (trainer.iterations() % cfg.train.eval_every == 0 || last_iteration)) {
      evaluate();
    }
  }
  TrainResult result{trainer.snapshot(), std::move(curve),
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
  saveCheckpoint(result.snapshot, ckpt);
  writeSvg(curvePlot(result.curve), opts.out_dir / "training_curve.svg");
  return result;
}

// ----------------------------------------------------------------- sweeps

void writeSweepCsv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "height,method,mean,std,max,min\n";
  for (const auto& r : rows) {
    out << formatNumber(r.height) << ',' << r.method << ',' << formatNumber(r.stats.mean) << ','
        << formatNumber(r.stats.std) << ',' << r.stats.max << ',' << r.stats.min << '\n';
  }
}

PlotSpec sweepPlot(const std::vector<SweepRow>& rows, const std::string& title) {
  PlotSpec p;
  p.title = title;
  p.x_label = "release height (m)";
  p.y_label = "mean consecutive hits";
  p.markers = true;
  for (const auto& r : rows) {
    auto it = std::find_if(p.series.begin(), p.series.end(), [&](const PlotSeries& s) { return s.name == r.method; });
    if (it == p.series.end()) {
      p.series.push_back({r.method, {}, {}});
      it = std::prev(p.series.end());
    }
    it->x.push_back(r.height);
    it->y.push_back(r.stats.mean);
  }
  return p;
}

std::vector<SweepRow> runCompare(const ScenarioConfig& cfg, const PolicySnapshot* policy, bool include_mbpp) {
  std::vector<SweepRow> rows;
  for (double h : cfg.compare.heights) {
    const EnvConfig env_cfg = evalEnvConfig(cfg, h);
    if (policy) {
      rows.push_back({h, "rl", evaluatePolicy(*policy, env_cfg, cfg.compare.episodes, cfg.seed).stats});
    }
    if (include_mbpp) {
      rows.push_back({h, "mbpp", evaluateMbpp(cfg.mbpp, env_cfg, cfg.compare.episodes, cfg.seed).stats});
    }
  }
  return rows;
}

std::vector<AblationRow> runAblation(const ScenarioConfig& cfg, const std::vector<std::string>& toggles,
                                     const std::filesystem::path& out_dir, bool deterministic) {
  ScenarioConfig base = cfg;
  base.train.total_frames = cfg.ablate.total_frames;
  std::vector<std::string> variants{"full"};
  variants.insert(variants.end(), toggles.begin(), toggles.end());

  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    ScenarioConfig vc = base;
    if (v != "full") applyToggle(vc, v);
    AblationRow row;
    row.variant = v;
    const auto diff = configDiff(base, vc);
    for (std::size_t i = 0; i < diff.size(); ++i) row.changed += (i ? ";" : "") + diff[i];

    TrainOptions opts;
    opts.out_dir = out_dir / v;
    opts.deterministic = deterministic;
    const TrainResult trained = runTraining(vc, opts);

    // Variants differ only in training; evaluation uses the full scenario.
    const EvalReport at_release = evaluatePolicy(trained.snapshot, evalEnvConfig(cfg, cfg.eval.release_height),
                                                 cfg.ablate.episodes, cfg.seed);
    row.stats = at_release.stats;
    double sum = 0.0;
    for (double h : cfg.compare.heights) {
      sum += evaluatePolicy(trained.snapshot, evalEnvConfig(cfg, h), cfg.ablate.episodes, cfg.seed).stats.mean;
    }
    row.sweep_mean = sum / cfg.compare.heights.size();
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const AblationRow& a, const AblationRow& b) { return a.stats.mean > b.stats.mean; });
  return rows;
}

void writeAblationCsv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "rank,variant,changed,mean,std,max,min,sweep_mean\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << i + 1 << ',' << r.variant << ',' << r.changed << ',' << formatNumber(r.stats.mean) << ','
        << formatNumber(r.stats.std) << ',' << r.stats.max << ',' << r.stats.min << ','
        << formatNumber(r.sweep_mean) << '\n';
  }
}

// ---------------------------------------------------------------- physics

std::vector<PhysicsCheck> runPhysicsChecks(const EnvConfig& cfg) {
  std::vector<PhysicsCheck> out;
  const double h = cfg.physicsDt();
  auto add = [&](std::string name, double value, double tol) { out.push_back({std::move(name), value, tol, value < tol}); };

  {
    const Eigen::Vector3d p0{0.0, 0.0, 1.0};
    QuadState q = hoverState(p0, cfg.quad);
    const RotorVector cmd = q.rotor_speeds;
    const int n = static_cast<int>(std::lround(10.0 / h));
    for (int i = 0; i < n; ++i) q = integrateQuad(q, cfg.quad, cmd, h);
    add("hover_drift_10s_m", (q.position - p0).norm(), 1e-3);
  }
  {
    BallParams bp = cfg.ball;
    bp.drag_enabled = false;
    BallState b{{0.1, -0.2, 1.0}, {0.3, -0.2, 4.0}};
    const BallState b0 = b;
    double err = 0.0;
    const int n = static_cast<int>(std::lround(1.0 / h));
    for (int i = 1; i <= n; ++i) {
      b = integrateBall(b, bp, h);
      const double t = i * h;
      const Eigen::Vector3d exact = b0.position + b0.velocity * t + 0.5 * gravityWorld() * t * t;
      err = std::max(err, (b.position - exact).norm());
    }
    add("ballistic_error_1s_m", err, 1e-6);
  }
  for (double e : {0.64, 0.82}) {
    BallParams bp = cfg.ball;
    bp.drag_enabled = false;
    RestitutionModel model;
    model.e_override = e;
    const QuadState quad = hoverState({0.0, 0.0, 1.0}, cfg.quad);
    const double drop = 1.0;
    const double face = cfg.racket.centerWorld(quad).z();
    BallState b{{0.0, 0.0, face + bp.radius + drop}, Eigen::Vector3d::Zero()};
    ApexTracker tracker;
    std::optional<double> apex;
    double z_contact = 0.0;
    for (int i = 0; i < 4000 && !apex; ++i) {
      BallState next = integrateBall(b, bp, h);
      if (auto c = detectContact(quad, b, next, cfg.racket, bp.radius, h)) {
        z_contact = c->ball_center.z();
        BallState post = resolveImpact(*c, model, cfg.racket);
        next = integrateBall(post, bp, (1.0 - c->fraction) * h);
        tracker.arm();
      } else if (auto a = tracker.observe(b, next, i * h, h, cfg.windows)) {
        apex = a->z_apex;
      }
      b = next;
    }
    const double expected = e * e * drop;
    const double got = apex ? *apex - z_contact : 0.0;
    std::ostringstream name;
    name << "bounce_apex_rel_error_e" << e;
    add(name.str(), std::abs(got / expected - 1.0), 1e-3);
  }
  {
    QuadState q = hoverState({0.0, 0.0, 1.0}, cfg.quad);
    q.body_rates = {3.0, -2.0, 1.5};
    RotorVector cmd = q.rotor_speeds;
    cmd[0] *= 1.05;
    cmd[2] *= 0.97;
    double drift = 0.0;
    for (int i = 0; i < 4000; ++i) {
      q = integrateQuad(q, cfg.quad, cmd, h);
      drift = std::max(drift, std::abs(q.attitude.norm() - 1.0));
    }
    add("quaternion_norm_drift", drift, 1e-9);
  }
  return out;
}

}  // namespace juggle
