#include "juggle/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace juggle {

using Json = nlohmann::ordered_json;

int TrainSettings::iterations(int rollout_length) const {
  const std::uint64_t per_iter = static_cast<std::uint64_t>(num_envs) * rollout_length;
  // The frame budget is a cap: never run an iteration that would exceed it.
  return static_cast<int>(std::max<std::uint64_t>(1, total_frames / per_iter));
}

namespace {

// ---------------------------------------------------------------- values

[[noreturn]] void typeError(const std::string& path, const char* expected) {
  throw ConfigError(path + ": expected " + expected);
}

void put(Json& j, double v) { j = v; }
void put(Json& j, int v) { j = v; }
void put(Json& j, std::uint64_t v) { j = v; }
void put(Json& j, std::uint16_t v) { j = v; }
void put(Json& j, std::uint32_t v) { j = v; }
void put(Json& j, bool v) { j = v; }
void put(Json& j, const std::string& v) { j = v; }
void put(Json& j, const Eigen::Vector3d& v) { j = Json::array({v.x(), v.y(), v.z()}); }
void put(Json& j, const Range& r) { j = Json::array({r.lo, r.hi}); }
void put(Json& j, const std::optional<double>& v) { j = v ? Json(*v) : Json(nullptr); }
void put(Json& j, lcp::Codec c) { j = std::string(lcp::toString(c)); }
void put(Json& j, lcp::TransportKind t) { j = std::string(lcp::toString(t)); }
template <typename T>
void put(Json& j, const std::vector<T>& v) {
  j = Json::array();
  for (const auto& x : v) {
    Json e;
    put(e, x);
    j.push_back(std::move(e));
  }
}
template <typename T, std::size_t N>
void put(Json& j, const std::array<T, N>& v) {
  j = Json::array();
  for (const auto& x : v) {
    Json e;
    put(e, x);
    j.push_back(std::move(e));
  }
}

void get(const Json& j, double& v, const std::string& path) {
  if (!j.is_number()) typeError(path, "a number");
  v = j.get<double>();
}
void get(const Json& j, int& v, const std::string& path) {
  if (!j.is_number_integer()) typeError(path, "an integer");
  const auto x = j.get<std::int64_t>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) typeError(path, "a 32-bit integer");
  v = static_cast<int>(x);
}
void get(const Json& j, std::uint64_t& v, const std::string& path) {
  if (!j.is_number_unsigned()) typeError(path, "a non-negative integer");
  v = j.get<std::uint64_t>();
}
void get(const Json& j, std::uint32_t& v, const std::string& path) {
  if (!j.is_number_unsigned() || j.get<std::uint64_t>() > 0xFFFFFFFFull) typeError(path, "a 32-bit unsigned integer");
  v = j.get<std::uint32_t>();
}
void get(const Json& j, std::uint16_t& v, const std::string& path) {
  if (!j.is_number_unsigned() || j.get<std::uint64_t>() > 0xFFFFull) typeError(path, "a port number");
  v = j.get<std::uint16_t>();
}
void get(const Json& j, bool& v, const std::string& path) {
  if (!j.is_boolean()) typeError(path, "true or false");
  v = j.get<bool>();
}
void get(const Json& j, std::string& v, const std::string& path) {
  if (!j.is_string()) typeError(path, "a string");
  v = j.get<std::string>();
}
void get(const Json& j, Eigen::Vector3d& v, const std::string& path) {
  if (!j.is_array() || j.size() != 3) typeError(path, "an array of 3 numbers");
  for (int i = 0; i < 3; ++i) get(j[i], v[i], path + "[" + std::to_string(i) + "]");
}
void get(const Json& j, Range& r, const std::string& path) {
  if (!j.is_array() || j.size() != 2) typeError(path, "[lo, hi]");
  get(j[0], r.lo, path + "[0]");
  get(j[1], r.hi, path + "[1]");
}
void get(const Json& j, std::optional<double>& v, const std::string& path) {
  if (j.is_null()) {
    v.reset();
    return;
  }
  double x = 0.0;
  get(j, x, path);
  v = x;
}
void get(const Json& j, lcp::Codec& c, const std::string& path) {
  std::string s;
  get(j, s, path);
  const auto parsed = lcp::parseCodec(s);
  if (!parsed) typeError(path, "\"lcp\" or \"verbose\"");
  c = *parsed;
}
void get(const Json& j, lcp::TransportKind& t, const std::string& path) {
  std::string s;
  get(j, s, path);
  const auto parsed = lcp::parseTransport(s);
  if (!parsed) typeError(path, "\"loopback\" or \"udp\"");
  t = *parsed;
}
template <typename T>
void get(const Json& j, std::vector<T>& v, const std::string& path) {
  if (!j.is_array()) typeError(path, "an array");
  v.assign(j.size(), T{});
  for (std::size_t i = 0; i < j.size(); ++i) get(j[i], v[i], path + "[" + std::to_string(i) + "]");
}
template <typename T, std::size_t N>
void get(const Json& j, std::array<T, N>& v, const std::string& path) {
  if (!j.is_array() || j.size() != N) typeError(path, ("an array of " + std::to_string(N)).c_str());
  for (std::size_t i = 0; i < N; ++i) get(j[i], v[i], path + "[" + std::to_string(i) + "]");
}

// --------------------------------------------------------------- visitors

class Writer {
 public:
  explicit Writer(Json& root) : cur_(&root) {}

  template <typename T>
  void field(const char* key, const T& value) {
    put((*cur_)[key], value);
  }

  template <typename F>
  void section(const char* key, F&& body) {
    Json& child = (*cur_)[key];
    child = Json::object();
    Json* saved = cur_;
    cur_ = &child;
    body(*this);
    cur_ = saved;
  }

 private:
  Json* cur_;
};

class Reader {
 public:
  Reader(const Json& node, std::string path) : node_(&node), path_(std::move(path)) {
    if (!node.is_object()) typeError(path_.empty() ? "config" : path_, "an object");
  }

  template <typename T>
  void field(const char* key, T& value) {
    seen_.insert(key);
    if (auto it = node_->find(key); it != node_->end()) get(*it, value, join(key));
  }

  template <typename F>
  void section(const char* key, F&& body) {
    seen_.insert(key);
    auto it = node_->find(key);
    if (it == node_->end()) return;
    Reader child(*it, join(key));
    body(child);
    child.finish();
  }

  void finish() const {
    for (auto it = node_->begin(); it != node_->end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(join(it.key()) + ": unknown key");
    }
  }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* node_;
  std::string path_;
  std::set<std::string> seen_;
};

// One description of the layout drives both reading and writing.
template <typename V, typename C>
void visit(V& v, C& c) {
  v.field("preset", c.preset);
  v.field("seed", c.seed);
  auto& e = c.env;
  v.section("quad", [&](V& s) {
    s.field("mass", e.quad.mass);
    s.field("inertia", e.quad.inertia);
    s.field("thrust_coeff", e.quad.thrust_coeff);
    s.field("drag_torque_coeff", e.quad.drag_torque_coeff);
    s.field("motor_time_constant", e.quad.motor_time_constant);
    s.field("rotor_positions", e.quad.rotor_positions);
    s.field("rotor_spin_dirs", e.quad.rotor_spin_dirs);
    s.field("max_rotor_speed", e.quad.max_rotor_speed);
  });
  v.section("ball", [&](V& s) {
    s.field("mass", e.ball.mass);
    s.field("radius", e.ball.radius);
    s.field("drag_enabled", e.ball.drag_enabled);
    s.field("drag_coeff", e.ball.drag_coeff);
    s.field("air_density", e.ball.air_density);
  });
  v.section("racket", [&](V& s) {
    s.field("disc_radius", e.racket.disc_radius);
    s.field("sweet_radius", e.racket.sweet_radius);
    s.field("offset_body", e.racket.offset_body);
    s.field("normal_body", e.racket.normal_body);
  });
  v.section("restitution", [&](V& s) {
    s.field("e_sweet", e.restitution.e_sweet);
    s.field("e_outer", e.restitution.e_outer);
    s.field("e_override", e.restitution.e_override);
  });
  v.section("windows", [&](V& s) {
    s.field("z_hit_min", e.windows.z_hit_min);
    s.field("z_hit_max", e.windows.z_hit_max);
    s.field("z_apex_min", e.windows.z_apex_min);
    s.field("z_apex_max", e.windows.z_apex_max);
  });
  v.section("dr", [&](V& s) {
    s.field("restitution", e.dr.restitution);
    s.field("ball_z", e.dr.ball_z);
    s.field("quad_z", e.dr.quad_z);
    s.field("ball_xy", e.dr.ball_xy);
    s.field("quad_xy", e.dr.quad_xy);
    s.field("randomize_restitution", e.dr.randomize_restitution);
    s.field("randomize_height", e.dr.randomize_height);
    s.field("randomize_horizontal", e.dr.randomize_horizontal);
    s.field("quad_height_row_is_y", e.dr.quad_height_row_is_y);
  });
  v.section("control", [&](V& s) {
    s.field("kp", e.control.kp);
    s.field("ki", e.control.ki);
    s.field("kd", e.control.kd);
    s.field("integrator_limit", e.control.integrator_limit);
    s.field("rate_limit", e.control.rate_limit);
  });
  v.section("workspace", [&](V& s) {
    s.field("xy_limit", e.workspace.xy_limit);
    s.field("quad_z_min", e.workspace.quad_z_min);
    s.field("quad_z_max", e.workspace.quad_z_max);
    s.field("ball_z_max", e.workspace.ball_z_max);
  });
  v.section("rewards", [&](V& s) {
    s.field("r_rpos", e.rewards.r_rpos);
    s.field("r_contact", e.rewards.r_contact);
    s.field("r_xy", e.rewards.r_xy);
    s.field("r_smooth", e.rewards.r_smooth);
    s.field("r_spin", e.rewards.r_spin);
  });
  v.section("env", [&](V& s) {
    s.field("control_hz", e.control_hz);
    s.field("physics_substeps", e.physics_substeps);
    s.field("max_steps", e.max_steps);
    s.field("contact_refractory", e.contact_refractory);
    s.field("hit_credit_requires_live_arc", e.hit_credit_requires_live_arc);
  });
  auto& p = c.ppo;
  v.section("ppo", [&](V& s) {
    s.field("gamma", p.gamma);
    s.field("gae_lambda", p.gae_lambda);
    s.field("clip", p.clip);
    s.field("epochs", p.epochs);
    s.field("minibatches", p.minibatches);
    s.field("learning_rate", p.learning_rate);
    s.field("entropy_coef", p.entropy_coef);
    s.field("value_coef", p.value_coef);
    s.field("max_grad_norm", p.max_grad_norm);
    s.field("rollout_length", p.rollout_length);
    s.field("hidden", p.hidden);
    s.field("init_log_std", p.init_log_std);
    s.field("adam_eps", p.adam_eps);
    s.field("reward_scale", p.reward_scale);
  });
  auto& m = c.mbpp;
  v.section("mbpp", [&](V& s) {
    s.field("hit_height", m.hit_height);
    s.field("target_apex", m.target_apex);
    s.field("e_assumed", m.e_assumed);
    s.field("accel_margin", m.accel_margin);
    s.field("freeze_time", m.freeze_time);
    s.field("min_track_time", m.min_track_time);
    s.field("horizon", m.horizon);
    s.field("ready_height", m.ready_height);
    s.field("ready_track_time", m.ready_track_time);
    s.field("lateral_position_gain", m.lateral_position_gain);
    s.field("lateral_velocity_gain", m.lateral_velocity_gain);
    s.field("vertical_position_gain", m.vertical_position_gain);
    s.field("vertical_velocity_gain", m.vertical_velocity_gain);
    s.field("attitude_gain", m.attitude_gain);
    s.field("lateral_settle_time", m.lateral_settle_time);
    s.field("feedforward_lead", m.feedforward_lead);
    s.field("level_at_impact", m.level_at_impact);
    s.field("measurement_noise", m.measurement_noise);
    s.section("filter", [&](V& f) {
      f.field("process_noise", m.filter.process_noise);
      f.field("measurement_noise", m.filter.measurement_noise);
      f.field("initial_velocity_std", m.filter.initial_velocity_std);
      f.field("innovation_gate", m.filter.innovation_gate);
    });
  });
  v.section("train", [&](V& s) {
    s.field("num_envs", c.train.num_envs);
    s.field("total_frames", c.train.total_frames);
    s.field("workers", c.train.workers);
    s.field("checkpoint_every", c.train.checkpoint_every);
    s.field("eval_every", c.train.eval_every);
  });
  v.section("eval", [&](V& s) {
    s.field("episodes", c.eval.episodes);
    s.field("max_steps", c.eval.max_steps);
    s.field("release_height", c.eval.release_height);
    s.field("nominal_restitution", c.eval.nominal_restitution);
  });
  v.section("compare", [&](V& s) {
    s.field("heights", c.compare.heights);
    s.field("episodes", c.compare.episodes);
  });
  v.section("ablate", [&](V& s) {
    s.field("toggles", c.ablate.toggles);
    s.field("total_frames", c.ablate.total_frames);
    s.field("episodes", c.ablate.episodes);
  });
  v.section("generalize", [&](V& s) { s.field("ball_mass", c.generalize.ball_mass); });
  auto& l = c.latency;
  v.section("latency", [&](V& s) {
    s.field("rate_hz", l.rate_hz);
    s.field("duration_s", l.duration_s);
    s.field("consumer_rate_hz", l.consumer_rate_hz);
    s.field("codec", l.codec);
    s.field("transport", l.transport);
    s.field("bandwidth_bps", l.link.bandwidth_bps);
    s.field("propagation_s", l.link.propagation_s);
    s.field("codec_ns_per_byte", l.link.codec_ns_per_byte);
    s.field("drop_period", l.drop_period);
    s.field("udp_port", l.udp_port);
  });
}

Json toJsonTree(const ScenarioConfig& cfg) {
  Json root = Json::object();
  Writer w(root);
  visit(w, const_cast<ScenarioConfig&>(cfg));
  return root;
}

void flatten(const Json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
  } else {
    out.emplace_back(prefix, j.dump());
  }
}

}  // namespace

void ScenarioConfig::validate() const {
  env.validate();
  ppo.validate();
  mbpp.validate();
  if (train.num_envs < 1) throw ConfigError("train.num_envs must be >= 1");
  if (train.total_frames < 1) throw ConfigError("train.total_frames must be >= 1");
  if (train.workers < 0) throw ConfigError("train.workers must be >= 0");
  if (train.checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
  if (train.eval_every < 0) throw ConfigError("train.eval_every must be >= 0");
  if (eval.episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  if (eval.max_steps < 1) throw ConfigError("eval.max_steps must be >= 1");
  if (!(eval.release_height > env.ball.radius)) throw ConfigError("eval.release_height must exceed the ball radius");
  if (compare.heights.empty()) throw ConfigError("compare.heights must not be empty");
  for (double h : compare.heights) {
    if (!(h > env.ball.radius)) throw ConfigError("compare.heights entries must exceed the ball radius");
  }
  if (compare.episodes < 1) throw ConfigError("compare.episodes must be >= 1");
  for (const auto& t : ablate.toggles) {
    if (std::find(ablationToggleNames().begin(), ablationToggleNames().end(), t) == ablationToggleNames().end()) {
      throw ConfigError("ablate.toggles: unknown toggle '" + t + "'");
    }
  }
  if (ablate.total_frames < 1) throw ConfigError("ablate.total_frames must be >= 1");
  if (ablate.episodes < 1) throw ConfigError("ablate.episodes must be >= 1");
  if (!(generalize.ball_mass > 0.0)) throw ConfigError("generalize.ball_mass must be > 0");
  try {
    latency.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("latency: ") + e.what());
  }
}

std::vector<std::string> presetNames() { return {"smoke", "desk", "full", "paper-sim", "real-analog"}; }

ScenarioConfig makePreset(std::string_view name) {
  ScenarioConfig c;
  c.preset = std::string(name);
  c.ppo.hidden = {64, 64};
  c.ppo.entropy_coef = 0.01;
  c.ppo.reward_scale = 0.1;
  if (name == "desk") return c;
  if (name == "smoke") {
    c.train.num_envs = 8;
    c.train.total_frames = 8ull * 64 * 3;
    c.train.checkpoint_every = 1;
    c.train.eval_every = 1;
    c.eval.episodes = 4;
    c.eval.max_steps = 500;
    c.compare.heights = {1.5, 4.0};
    c.compare.episodes = 2;
    c.ablate.toggles = {"r_contact", "DR-height"};
    c.ablate.total_frames = 8ull * 64 * 2;
    c.ablate.episodes = 2;
    c.latency.duration_s = 1.0;
    return c;
  }
  if (name == "full" || name == "paper-sim") {
    c.ppo.hidden = {256, 256};
    c.train.num_envs = 4096;
    c.train.total_frames = 2'000'000'000ull;
    if (name == "paper-sim") c.env.racket = RacketGeometry::sweetSpotOnly();
    return c;
  }
  if (name == "real-analog") {
    c.env.windows.z_apex_min = 1.6;
    c.env.windows.z_apex_max = 1.85;
    c.mbpp.target_apex = 1.725;
    return c;
  }
  throw ConfigError("preset: unknown preset '" + std::string(name) + "'");
}

std::string toJson(const ScenarioConfig& cfg) { return toJsonTree(cfg).dump(2) + "\n"; }

ScenarioConfig configFromJson(std::string_view text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: expected an object");
  std::string preset = "desk";
  if (auto it = root.find("preset"); it != root.end()) get(*it, preset, "preset");
  ScenarioConfig cfg = makePreset(preset);
  Reader r(root, "");
  visit(r, cfg);
  r.finish();
  cfg.validate();
  return cfg;
}

ScenarioConfig loadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return configFromJson(ss.str());
}

void saveConfig(const ScenarioConfig& cfg, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("config: cannot write " + path.string());
  out << toJson(cfg);
}

std::uint64_t configHash(const ScenarioConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : toJson(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hashHex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> configDiff(const ScenarioConfig& a, const ScenarioConfig& b) {
  std::vector<std::pair<std::string, std::string>> fa, fb;
  flatten(toJsonTree(a), "", fa);
  flatten(toJsonTree(b), "", fb);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    if (fa[i].second != fb[i].second) out.push_back(fa[i].first);
  }
  return out;
}

const std::vector<std::string>& ablationToggleNames() {
  static const std::vector<std::string> names{"r_xy",    "r_spin",  "r_rpos",  "r_contact",
                                              "r_smooth", "DR-hpos", "DR-rest", "DR-height"};
  return names;
}

void applyToggle(ScenarioConfig& cfg, std::string_view name) {
  auto& r = cfg.env.rewards;
  auto& dr = cfg.env.dr;
  if (name == "r_xy") r.r_xy = false;
  else if (name == "r_spin") r.r_spin = false;
  else if (name == "r_rpos") r.r_rpos = false;
  else if (name == "r_contact") r.r_contact = false;
  else if (name == "r_smooth") r.r_smooth = false;
  else if (name == "DR-hpos") dr.randomize_horizontal = false;
  else if (name == "DR-rest") dr.randomize_restitution = false;
  else if (name == "DR-height") dr.randomize_height = false;
  else throw ConfigError("toggle: unknown toggle '" + std::string(name) + "'");
}

}  // namespace juggle
