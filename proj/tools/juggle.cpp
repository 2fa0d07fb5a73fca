// Command-line harness: config generation, training, evaluation, sweeps,
// ablations, the latency bench and the physics self-check.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "juggle/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace juggle;

namespace {

struct Common {
  std::string config_path;
  std::string preset = "desk";
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out;
};

void addCommon(CLI::App* app, Common& c, const std::string& default_out) {
  c.out = default_out;
  app->add_option("--config", c.config_path, "Scenario JSON file")->check(CLI::ExistingFile);
  app->add_option("--preset", c.preset, "Preset used when no --config is given");
  app->add_option("--seed", c.seed, "Root seed");
  app->add_flag("--deterministic", c.deterministic, "Single-threaded, bitwise reproducible run");
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
}

ScenarioConfig resolve(const Common& c) {
  ScenarioConfig cfg = c.config_path.empty() ? makePreset(c.preset) : loadConfig(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (c.deterministic) {
    cfg.train.workers = 1;
    cfg.latency.deterministic = true;
  }
  cfg.validate();
  return cfg;
}

template <typename F>
void writeCsv(const fs::path& path, F&& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  body(out);
}

ordered_json statsJson(const HitStats& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"median", s.median}, {"max", s.max}, {"min", s.min}};
}

ordered_json reportJson(const EvalReport& r) {
  ordered_json j;
  j["method"] = r.method;
  j["release_height"] = r.release_height;
  j["ball_mass"] = r.ball_mass;
  j["episodes"] = r.episodes.size();
  j["hits"] = statsJson(r.stats);
  j["wall_seconds"] = r.wall_seconds;
  j["config_hash"] = r.config_hash;
  return j;
}

void printReport(const EvalReport& r) {
  std::printf("%s h=%.2f m_ball=%.4f episodes=%zu mean=%.3f std=%.3f median=%.1f max=%d min=%d (%.1f s)\n",
              r.method.c_str(), r.release_height, r.ball_mass, r.episodes.size(), r.stats.mean, r.stats.std,
              r.stats.median, r.stats.max, r.stats.min, r.wall_seconds);
}

void emitEval(const fs::path& dir, const std::string& stem, const EvalReport& r,
              const std::vector<TrajectoryRow>& traj) {
  writeCsv(dir / (stem + ".csv"), [&](std::ostream& o) { writeEvalCsv(o, r); });
  writeCsv(dir / (stem + "_trajectory.csv"), [&](std::ostream& o) { writeTrajectoryCsv(o, traj); });
  writeTextFile(dir / (stem + "_summary.json"), reportJson(r).dump(2) + "\n");
}

PolicySnapshot loadPolicy(const std::string& path) {
  if (path.empty()) throw CLI::ValidationError("--checkpoint", "required for the rl method");
  return loadCheckpoint(path);
}

// ---- subcommands

int cmdInit(const std::string& preset, const std::string& out) {
  const ScenarioConfig cfg = makePreset(preset);
  if (out == "-") {
    std::cout << toJson(cfg);
  } else {
    saveConfig(cfg, out);
    std::printf("wrote %s (preset %s, hash %s)\n", out.c_str(), preset.c_str(), hashHex(configHash(cfg)).c_str());
  }
  return 0;
}

int cmdTrain(const Common& c, const std::string& resume, std::optional<std::uint64_t> frames,
             std::optional<int> envs) {
  ScenarioConfig cfg = resolve(c);
  if (frames) cfg.train.total_frames = *frames;
  if (envs) cfg.train.num_envs = *envs;
  cfg.validate();
  TrainOptions opts;
  opts.out_dir = c.out;
  opts.deterministic = c.deterministic;
  if (!resume.empty()) opts.resume = resume;
  const int total = cfg.train.iterations(cfg.ppo.rollout_length);
  opts.on_iteration = [total](const IterationStats& s, double wall) {
    std::fprintf(stderr, "iter %llu/%d frames %llu hits %.3f return %.2f entropy %.3f kl %.4f  [%.0f s]\n",
                 static_cast<unsigned long long>(s.iteration), total, static_cast<unsigned long long>(s.frames),
                 s.mean_consecutive_hits, s.mean_return, s.entropy, s.approx_kl, wall);
  };
  const TrainResult r = runTraining(cfg, opts);
  std::printf("trained %llu frames in %.1f s; checkpoint %s\n", static_cast<unsigned long long>(r.snapshot.frames),
              r.wall_seconds, (fs::path(c.out) / "checkpoint.ckpt").c_str());
  return 0;
}

int cmdEval(const Common& c, const std::string& method, const std::string& checkpoint,
            std::optional<double> height, std::optional<int> episodes) {
  ScenarioConfig cfg = resolve(c);
  if (episodes) cfg.eval.episodes = *episodes;
  if (height) cfg.eval.release_height = *height;
  const EnvConfig env_cfg = evalEnvConfig(cfg, cfg.eval.release_height);
  std::vector<TrajectoryRow> traj;
  EvalReport r;
  if (method == "mbpp") {
    r = evaluateMbpp(cfg.mbpp, env_cfg, cfg.eval.episodes, cfg.seed, &traj);
  } else if (method == "random") {
    r = evaluatePolicy(randomPolicy(cfg, cfg.seed), env_cfg, cfg.eval.episodes, cfg.seed, &traj);
    r.method = "random";
  } else {
    r = evaluatePolicy(loadPolicy(checkpoint), env_cfg, cfg.eval.episodes, cfg.seed, &traj);
  }
  r.config_hash = hashHex(configHash(cfg));
  const fs::path dir = c.out;
  saveConfig(cfg, dir / "config.resolved.json");
  emitEval(dir, "eval", r, traj);
  printReport(r);
  return 0;
}

int cmdCompare(const Common& c, const std::string& checkpoint, const std::vector<double>& heights,
               std::optional<int> episodes, bool skip_mbpp) {
  ScenarioConfig cfg = resolve(c);
  if (!heights.empty()) cfg.compare.heights = heights;
  if (episodes) cfg.compare.episodes = *episodes;
  std::optional<PolicySnapshot> policy;
  if (!checkpoint.empty()) policy = loadCheckpoint(checkpoint);
  if (!policy && skip_mbpp) throw CLI::ValidationError("compare", "nothing to evaluate");
  const auto rows = runCompare(cfg, policy ? &*policy : nullptr, !skip_mbpp);
  const fs::path dir = c.out;
  saveConfig(cfg, dir / "config.resolved.json");
  writeCsv(dir / "sweep.csv", [&](std::ostream& o) { writeSweepCsv(o, rows); });
  writeSvg(sweepPlot(rows, "Mean consecutive hits vs. release height"), dir / "sweep.svg");
  for (const auto& r : rows) {
    std::printf("%-5s h=%.2f mean=%.2f std=%.2f median=%.1f max=%d min=%d\n", r.method.c_str(), r.height,
                r.stats.mean, r.stats.std, r.stats.median, r.stats.max, r.stats.min);
  }
  return 0;
}

int cmdAblate(const Common& c, std::vector<std::string> toggles, std::optional<std::uint64_t> frames,
              std::optional<int> episodes) {
  ScenarioConfig cfg = resolve(c);
  if (frames) cfg.ablate.total_frames = *frames;
  if (episodes) cfg.ablate.episodes = *episodes;
  if (toggles.empty()) toggles = cfg.ablate.toggles;
  for (const auto& t : toggles) {
    ScenarioConfig probe = cfg;
    applyToggle(probe, t);  // rejects unknown names before any training starts
  }
  const fs::path dir = c.out;
  saveConfig(cfg, dir / "config.resolved.json");
  const auto rows = runAblation(cfg, toggles, dir, c.deterministic);
  writeCsv(dir / "ablation.csv", [&](std::ostream& o) { writeAblationCsv(o, rows); });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::printf("%zu. %-10s mean=%.2f sweep_mean=%.2f  [%s]\n", i + 1, r.variant.c_str(), r.stats.mean,
                r.sweep_mean, r.changed.c_str());
  }
  return 0;
}

int cmdGeneralize(const Common& c, const std::string& checkpoint, std::optional<double> mass,
                  std::optional<double> height, std::optional<int> episodes) {
  ScenarioConfig cfg = resolve(c);
  if (mass) cfg.generalize.ball_mass = *mass;
  if (height) cfg.eval.release_height = *height;
  if (episodes) cfg.eval.episodes = *episodes;
  const PolicySnapshot policy = loadPolicy(checkpoint);

  ScenarioConfig probe = cfg;
  probe.env.ball.mass = cfg.generalize.ball_mass;
  const auto diff = configDiff(cfg, probe);

  std::vector<TrajectoryRow> traj_nominal, traj_probe;
  EvalReport nominal = evaluatePolicy(policy, evalEnvConfig(cfg, cfg.eval.release_height), cfg.eval.episodes,
                                      cfg.seed, &traj_nominal);
  nominal.config_hash = hashHex(configHash(cfg));
  EvalReport light = evaluatePolicy(policy, evalEnvConfig(probe, cfg.eval.release_height), cfg.eval.episodes,
                                    cfg.seed, &traj_probe);
  light.config_hash = hashHex(configHash(probe));

  const fs::path dir = c.out;
  saveConfig(cfg, dir / "config.resolved.json");
  emitEval(dir, "eval_nominal", nominal, traj_nominal);
  emitEval(dir, "eval", light, traj_probe);
  ordered_json g;
  g["nominal"] = reportJson(nominal);
  g["probe"] = reportJson(light);
  g["mean_ratio"] = nominal.stats.mean > 0 ? light.stats.mean / nominal.stats.mean : 0.0;
  g["changed"] = diff;
  writeTextFile(dir / "generalize.json", g.dump(2) + "\n");
  printReport(nominal);
  printReport(light);
  std::printf("ratio %.3f\n", g["mean_ratio"].get<double>());
  return 0;
}

int cmdLatency(const Common& c, const std::string& codec, const std::string& transport,
               std::optional<double> duration, std::optional<double> rate, std::optional<std::uint32_t> drop) {
  ScenarioConfig cfg = resolve(c);
  lcp::LatencyBenchConfig bench = cfg.latency;
  if (duration) bench.duration_s = *duration;
  if (rate) bench.rate_hz = *rate;
  if (drop) bench.drop_period = *drop;
  if (!transport.empty()) {
    const auto t = lcp::parseTransport(transport);
    if (!t) throw CLI::ValidationError("--transport", "expected loopback or udp");
    bench.transport = *t;
  }
  std::vector<lcp::Codec> codecs;
  if (codec == "both") {
    codecs = {lcp::Codec::kLcp, lcp::Codec::kVerbose};
  } else {
    const auto k = lcp::parseCodec(codec);
    if (!k) throw CLI::ValidationError("--codec", "expected lcp, verbose or both");
    codecs = {*k};
  }

  const fs::path dir = c.out;
  saveConfig(cfg, dir / "config.resolved.json");
  PlotSpec plot{"Per-frame latency", "sequence number", "latency (ms)", {}, false};
  ordered_json summary = ordered_json::array();
  for (auto k : codecs) {
    bench.codec = k;
    const lcp::LatencyReport r = lcp::latencyBench(bench);
    const std::string name(lcp::toString(k));
    writeCsv(dir / ("latency_" + name + ".csv"), [&](std::ostream& o) { lcp::writeLatencyCsv(o, r); });
    writeCsv(dir / ("staleness_" + name + ".csv"), [&](std::ostream& o) { lcp::writeStalenessCsv(o, r); });
    PlotSeries s{name, {}, {}};
    for (const auto& x : r.samples) {
      s.x.push_back(x.seq);
      s.y.push_back(x.latencyNs() * 1e-6);
    }
    plot.series.push_back(std::move(s));
    summary.push_back({{"codec", name},
                       {"transport", std::string(lcp::toString(bench.transport))},
                       {"bytes_per_frame", r.bytes_per_frame},
                       {"frames_sent", r.frames_sent},
                       {"frames_dropped", r.frames_dropped},
                       {"frames_received", r.frames_received},
                       {"decode_errors", r.decode_errors},
                       {"seq_gaps", r.seq_gaps},
                       {"median_latency_ms", r.medianLatencySeconds() * 1e3},
                       {"median_staleness_ms", r.medianStalenessSeconds() * 1e3}});
    std::printf("%-7s %s bytes=%zu sent=%u received=%u decode_errors=%u gaps=%u latency=%.3f ms staleness=%.3f ms\n",
                name.c_str(), std::string(lcp::toString(bench.transport)).c_str(), r.bytes_per_frame, r.frames_sent,
                r.frames_received, r.decode_errors, r.seq_gaps, r.medianLatencySeconds() * 1e3,
                r.medianStalenessSeconds() * 1e3);
  }
  writeSvg(plot, dir / "latency.svg");
  writeTextFile(dir / "latency_summary.json", summary.dump(2) + "\n");
  return 0;
}

int cmdPhysics(const Common& c) {
  const ScenarioConfig cfg = resolve(c);
  const auto checks = runPhysicsChecks(cfg.env);
  bool ok = true;
  writeCsv(fs::path(c.out) / "physics.csv", [&](std::ostream& o) {
    o << "check,value,tolerance,pass\n";
    for (const auto& k : checks) {
      o << k.name << ',' << formatNumber(k.value) << ',' << formatNumber(k.tolerance) << ',' << k.pass << '\n';
    }
  });
  for (const auto& k : checks) {
    std::printf("%-32s %-12.3e < %-8.1e %s\n", k.name.c_str(), k.value, k.tolerance, k.pass ? "PASS" : "FAIL");
    ok = ok && k.pass;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quadrotor ball-juggling simulator, learner and baseline"};
  app.require_subcommand(1);

  std::string init_preset = "desk", init_out = "scenario.json";
  auto addInit = [&](CLI::App* sub) {
    sub->add_option("--preset", init_preset, "One of: desk, smoke, full, paper-sim, real-analog")
        ->capture_default_str();
    sub->add_option("--out", init_out, "Destination file, or - for stdout")->capture_default_str();
  };
  auto* init = app.add_subcommand("init", "Write a fully populated scenario file");
  addInit(init);
  auto* config = app.add_subcommand("config", "Scenario file utilities");
  auto* config_init = config->add_subcommand("init", "Write a fully populated scenario file");
  addInit(config_init);
  config->require_subcommand(1);

  Common train_c, eval_c, cmp_c, abl_c, gen_c, lat_c, phys_c;

  auto* train = app.add_subcommand("train", "Train a policy with PPO");
  addCommon(train, train_c, "runs/train");
  std::string resume;
  std::optional<std::uint64_t> train_frames;
  std::optional<int> train_envs;
  train->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_option("--frames", train_frames, "Override train.total_frames");
  train->add_option("--envs", train_envs, "Override train.num_envs");

  auto* eval = app.add_subcommand("eval", "Evaluate a policy or the planner");
  addCommon(eval, eval_c, "runs/eval");
  std::string method = "rl", eval_ckpt;
  std::optional<double> eval_height;
  std::optional<int> eval_episodes;
  eval->add_option("--method", method, "rl, mbpp or random")
      ->check(CLI::IsMember({"rl", "mbpp", "random"}))
      ->capture_default_str();
  eval->add_option("--checkpoint", eval_ckpt, "Policy checkpoint")->check(CLI::ExistingFile);
  eval->add_option("--height", eval_height, "Ball release height (m)");
  eval->add_option("--episodes", eval_episodes, "Episode count");

  auto* cmp = app.add_subcommand("compare", "Sweep release heights for both methods");
  addCommon(cmp, cmp_c, "runs/compare");
  std::string cmp_ckpt;
  std::vector<double> cmp_heights;
  std::optional<int> cmp_episodes;
  bool skip_mbpp = false;
  cmp->add_option("--checkpoint", cmp_ckpt, "Policy checkpoint (omit for planner only)")->check(CLI::ExistingFile);
  cmp->add_option("--height", cmp_heights, "Release heights (repeatable)");
  cmp->add_option("--episodes", cmp_episodes, "Episodes per height and method");
  cmp->add_flag("--no-mbpp", skip_mbpp, "Skip the planner");

  auto* abl = app.add_subcommand("ablate", "Train and rank ablated variants");
  addCommon(abl, abl_c, "runs/ablate");
  std::vector<std::string> toggles;
  std::optional<std::uint64_t> abl_frames;
  std::optional<int> abl_episodes;
  abl->add_option("--toggle", toggles, "Component to disable (repeatable)");
  abl->add_option("--frames", abl_frames, "Training frames per variant");
  abl->add_option("--episodes", abl_episodes, "Evaluation episodes per height");

  auto* gen = app.add_subcommand("generalize", "Zero-shot evaluation with a different ball mass");
  addCommon(gen, gen_c, "runs/generalize");
  std::string gen_ckpt;
  std::optional<double> gen_mass, gen_height;
  std::optional<int> gen_episodes;
  gen->add_option("--checkpoint", gen_ckpt, "Policy checkpoint")->required()->check(CLI::ExistingFile);
  gen->add_option("--ball-mass", gen_mass, "Ball mass (kg)");
  gen->add_option("--height", gen_height, "Ball release height (m)");
  gen->add_option("--episodes", gen_episodes, "Episode count");

  auto* lat = app.add_subcommand("latency-bench", "Stream state frames and measure latency");
  addCommon(lat, lat_c, "runs/latency");
  std::string codec = "both", transport;
  std::optional<double> lat_duration, lat_rate;
  std::optional<std::uint32_t> lat_drop;
  lat->add_option("--codec", codec, "lcp, verbose or both")->capture_default_str();
  lat->add_option("--transport", transport, "loopback or udp");
  lat->add_option("--duration", lat_duration, "Seconds of streaming");
  lat->add_option("--rate", lat_rate, "Publish rate (Hz)");
  lat->add_option("--drop-period", lat_drop, "Skip one frame in every N");

  auto* phys = app.add_subcommand("physics-check", "Run the analytic physics checks");
  addCommon(phys, phys_c, "runs/physics");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*init) return cmdInit(init_preset, init_out);
    if (*config_init) return cmdInit(init_preset, init_out);
    if (*train) return cmdTrain(train_c, resume, train_frames, train_envs);
    if (*eval) return cmdEval(eval_c, method, eval_ckpt, eval_height, eval_episodes);
    if (*cmp) return cmdCompare(cmp_c, cmp_ckpt, cmp_heights, cmp_episodes, skip_mbpp);
    if (*abl) return cmdAblate(abl_c, toggles, abl_frames, abl_episodes);
    if (*gen) return cmdGeneralize(gen_c, gen_ckpt, gen_mass, gen_height, gen_episodes);
    if (*lat) return cmdLatency(lat_c, codec, transport, lat_duration, lat_rate, lat_drop);
    if (*phys) return cmdPhysics(phys_c);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
