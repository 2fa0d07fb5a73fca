#include "juggle/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace juggle {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

// log(1 - tanh(u)^2) without cancellation for large |u|.
double logTanhJacobian(double u) {
  const double a = std::abs(u);
  return 2.0 * (std::numbers::ln2 - a - std::log1p(std::exp(-2.0 * a)));
}

}  // namespace

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma must lie in (0, 1]");
  if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) throw ConfigError("ppo.gae_lambda must lie in (0, 1]");
  if (!(clip > 0.0)) throw ConfigError("ppo.clip must be > 0");
  if (epochs < 1) throw ConfigError("ppo.epochs must be >= 1");
  if (minibatches < 1) throw ConfigError("ppo.minibatches must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("ppo.learning_rate must be >= 0");
  if (!(entropy_coef >= 0.0)) throw ConfigError("ppo.entropy_coef must be >= 0");
  if (!(value_coef >= 0.0)) throw ConfigError("ppo.value_coef must be >= 0");
  if (!(max_grad_norm > 0.0)) throw ConfigError("ppo.max_grad_norm must be > 0");
  if (rollout_length < 1) throw ConfigError("ppo.rollout_length must be >= 1");
  if (hidden.empty()) throw ConfigError("ppo.hidden must list at least one layer");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("ppo.hidden sizes must be >= 1");
  }
  if (!(init_log_std >= ActorCritic<double>::kLogStdMin && init_log_std <= ActorCritic<double>::kLogStdMax)) {
    throw ConfigError("ppo.init_log_std must lie in [-5, 1]");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("ppo.adam_eps must be > 0");
  if (!(reward_scale > 0.0)) throw ConfigError("ppo.reward_scale must be > 0");
}

// ---------------------------------------------------------------- Mlp

template <typename S>
Mlp<S>::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ConfigError("network needs an input and an output size");
  for (int s : sizes_) {
    if (s < 1) throw ConfigError("network layer sizes must be >= 1");
  }
  for (int l = 0; l < layers(); ++l) {
    offsets_.push_back(param_count_);
    param_count_ += sizes_[l + 1] * (sizes_[l] + 1);
  }
}

template <typename S>
void Mlp<S>::forward(const S* theta, const MatrixX<S>& x, std::vector<MatrixX<S>>& acts) const {
  acts.resize(sizes_.size());
  acts[0] = x;
  for (int l = 0; l < layers(); ++l) {
    Eigen::Map<const MatrixX<S>> w(theta + weightOffset(l), sizes_[l + 1], sizes_[l]);
    Eigen::Map<const VectorX<S>> b(theta + biasOffset(l), sizes_[l + 1]);
    acts[l + 1].noalias() = w * acts[l];
    acts[l + 1].colwise() += b;
    if (l + 1 < layers()) acts[l + 1] = acts[l + 1].array().tanh();
  }
}

template <typename S>
MatrixX<S> Mlp<S>::forward(const S* theta, const MatrixX<S>& x) const {
  std::vector<MatrixX<S>> acts;
  forward(theta, x, acts);
  return std::move(acts.back());
}

template <typename S>
void Mlp<S>::backward(const S* theta, const std::vector<MatrixX<S>>& acts, const MatrixX<S>& d_out,
                      S* grad) const {
  MatrixX<S> d = d_out;
  for (int l = layers() - 1; l >= 0; --l) {
    if (l + 1 < layers()) d.array() *= (S(1) - acts[l + 1].array().square());
    Eigen::Map<MatrixX<S>> gw(grad + weightOffset(l), sizes_[l + 1], sizes_[l]);
    Eigen::Map<VectorX<S>> gb(grad + biasOffset(l), sizes_[l + 1]);
    gw.noalias() += d * acts[l].transpose();
    gb += d.rowwise().sum();
    if (l > 0) {
      Eigen::Map<const MatrixX<S>> w(theta + weightOffset(l), sizes_[l + 1], sizes_[l]);
      MatrixX<S> next = w.transpose() * d;
      d = std::move(next);
    }
  }
}

// -------------------------------------------------------- ActorCritic

namespace {

std::vector<int> layerSizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

}  // namespace

template <typename S>
ActorCritic<S>::ActorCritic(int obs_dim, int act_dim, const std::vector<int>& hidden)
    : obs_dim_(obs_dim),
      act_dim_(act_dim),
      hidden_(hidden),
      actor_(layerSizes(obs_dim, hidden, act_dim)),
      critic_(layerSizes(obs_dim + 1, hidden, 1)),
      theta_(VectorX<S>::Zero(actor_.paramCount() + act_dim + critic_.paramCount())) {}

template <typename S>
void ActorCritic<S>::initialize(std::uint64_t seed, double init_log_std) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  theta_.setZero();
  auto fill = [&](const Mlp<S>& net, int base, double out_gain) {
    for (int l = 0; l < net.layers(); ++l) {
      const int in = net.sizes()[l];
      const int out = net.sizes()[l + 1];
      const double gain = (l + 1 == net.layers() ? out_gain : 1.0) / std::sqrt(static_cast<double>(in));
      for (int k = 0; k < in * out; ++k) theta_[base + net.weightOffset(l) + k] = static_cast<S>(gain * normal(rng));
    }
  };
  fill(actor_, 0, 0.01);
  fill(critic_, criticOffset(), 1.0);
  theta_.segment(logStdOffset(), act_dim_).setConstant(static_cast<S>(init_log_std));
}

template <typename S>
void ActorCritic<S>::setActionBias(const Eigen::VectorXd& action) {
  if (action.size() != act_dim_) throw ConfigError("initial action has the wrong dimension");
  const int off = actor_.biasOffset(actor_.layers() - 1);
  for (int k = 0; k < act_dim_; ++k) {
    theta_[off + k] = static_cast<S>(std::atanh(std::clamp(action[k], -0.999, 0.999)));
  }
}

template <typename S>
void ActorCritic<S>::clampLogStd() {
  auto ls = theta_.segment(logStdOffset(), act_dim_);
  ls = ls.cwiseMax(static_cast<S>(kLogStdMin)).cwiseMin(static_cast<S>(kLogStdMax));
}

template <typename S>
VectorX<S> ActorCritic<S>::value(const MatrixX<S>& critic_in) const {
  return critic_.forward(criticParams(), critic_in).row(0).transpose();
}

template <typename S>
template <typename T>
ActorCritic<T> ActorCritic<S>::cast() const {
  ActorCritic<T> out(obs_dim_, act_dim_, hidden_);
  out.params() = theta_.template cast<T>();
  return out;
}

// ------------------------------------------------------ distributions

template <typename S>
VectorX<S> gaussianLogProb(const MatrixX<S>& u, const MatrixX<S>& mean, const VectorX<S>& log_std) {
  const VectorX<S> inv_std = (-log_std.array()).exp();
  const MatrixX<S> z = (u - mean).array().colwise() * inv_std.array();
  const S c = -log_std.sum() - static_cast<S>(0.5 * kLog2Pi * log_std.size());
  return (S(-0.5) * z.array().square().colwise().sum()).transpose() + c;
}

double squashedLogProb(const Eigen::VectorXd& u, const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std) {
  double lp = gaussianLogProb<double>(u, mean, log_std)[0];
  for (int k = 0; k < u.size(); ++k) lp -= logTanhJacobian(u[k]);
  return lp;
}

double squashedEntropy(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std, int nodes) {
  // Golub-Welsch for the physicists' Hermite weight exp(-x^2).
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(nodes, nodes);
  for (int i = 1; i < nodes; ++i) jac(i, i - 1) = jac(i - 1, i) = std::sqrt(i / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jac);
  const Eigen::VectorXd x = eig.eigenvalues();
  const Eigen::VectorXd w = eig.eigenvectors().row(0).transpose().array().square();  // sums to 1

  double h = 0.0;
  for (int k = 0; k < mean.size(); ++k) {
    const double sigma = std::exp(log_std[k]);
    double expected = 0.0;
    for (int i = 0; i < nodes; ++i) expected += w[i] * logTanhJacobian(mean[k] + std::sqrt(2.0) * sigma * x[i]);
    h += log_std[k] + 0.5 * (1.0 + kLog2Pi) + expected;
  }
  return h;
}

// ---------------------------------------------------------- normalizer

ObsNormalizer::ObsNormalizer(int dim) : mean_(Eigen::VectorXd::Zero(dim)), var_(Eigen::VectorXd::Ones(dim)) {}

void ObsNormalizer::update(const Eigen::MatrixXd& batch) {
  if (batch.rows() != dim()) throw UsageError("normalizer: observation dimension mismatch");
  const double n = static_cast<double>(batch.cols());
  if (n == 0) return;
  const Eigen::VectorXd b_mean = batch.rowwise().mean();
  const Eigen::VectorXd b_var = (batch.colwise() - b_mean).array().square().rowwise().mean();
  const double total = count_ + n;
  const Eigen::VectorXd delta = b_mean - mean_;
  const Eigen::VectorXd m2 = var_ * count_ + b_var * n + delta.array().square().matrix() * (count_ * n / total);
  mean_ += delta * (n / total);
  var_ = m2 / total;
  count_ = total;
}

Eigen::MatrixXd ObsNormalizer::normalize(const Eigen::MatrixXd& batch) const {
  if (batch.rows() != dim()) throw UsageError("normalizer: observation dimension mismatch");
  const Eigen::ArrayXd inv_std = (var_.array() + kEps).rsqrt();
  Eigen::MatrixXd out = ((batch.colwise() - mean_).array().colwise() * inv_std).matrix();
  return out.cwiseMax(-kClip).cwiseMin(kClip);
}

void ObsNormalizer::setStats(double count, Eigen::VectorXd mean, Eigen::VectorXd var) {
  if (mean.size() != var.size()) throw ConfigError("normalizer: mean/var size mismatch");
  count_ = count;
  mean_ = std::move(mean);
  var_ = std::move(var);
}

// ----------------------------------------------------------------- act

namespace {

template <typename S>
MatrixX<S> criticInput(const MatrixX<S>& obs, const VectorX<S>& time_fraction) {
  MatrixX<S> in(obs.rows() + 1, obs.cols());
  in.topRows(obs.rows()) = obs;
  in.bottomRows(1) = time_fraction.transpose();
  return in;
}

}  // namespace

template <typename S>
ActResult act(const ActorCritic<S>& net, const MatrixX<S>& obs, const VectorX<S>& time_fraction,
              std::mt19937_64& rng, bool deterministic) {
  const int n = static_cast<int>(obs.cols());
  const Eigen::MatrixXd mean = net.mean(obs).template cast<double>();
  ActResult r;
  r.value = net.value(criticInput<S>(obs, time_fraction)).template cast<double>();
  if (deterministic) {
    r.pre_squash = mean;
    r.action = mean.array().tanh();
    return r;
  }
  const Eigen::VectorXd log_std = net.logStd().template cast<double>();
  const Eigen::VectorXd sd = log_std.array().exp();
  std::normal_distribution<double> normal(0.0, 1.0);
  r.pre_squash.resize(mean.rows(), n);
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < mean.rows(); ++k) r.pre_squash(k, j) = mean(k, j) + sd[k] * normal(rng);
  }
  r.action = r.pre_squash.array().tanh();
  r.gaussian_log_prob = gaussianLogProb<double>(r.pre_squash, mean, log_std);
  r.log_prob = r.gaussian_log_prob;
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < mean.rows(); ++k) r.log_prob[j] -= logTanhJacobian(r.pre_squash(k, j));
  }
  return r;
}

// ----------------------------------------------------------------- GAE

GaeResult computeGae(const Eigen::MatrixXd& rewards, const Eigen::MatrixXd& values,
                     const Eigen::MatrixXd& terminated, const Eigen::MatrixXd& truncated,
                     const Eigen::MatrixXd& truncation_values, const Eigen::VectorXd& last_values,
                     double gamma, double lambda) {
  const int T = static_cast<int>(rewards.rows());
  const int N = static_cast<int>(rewards.cols());
  GaeResult g{Eigen::MatrixXd::Zero(T, N), Eigen::MatrixXd::Zero(T, N)};
  for (int i = 0; i < N; ++i) {
    double next_adv = 0.0;
    double next_value = last_values[i];
    for (int t = T - 1; t >= 0; --t) {
      double delta;
      if (terminated(t, i) != 0.0) {
        delta = rewards(t, i) - values(t, i);
        next_adv = 0.0;
      } else if (truncated(t, i) != 0.0) {
        delta = rewards(t, i) + gamma * truncation_values(t, i) - values(t, i);
        next_adv = 0.0;
      } else {
        delta = rewards(t, i) + gamma * next_value - values(t, i);
      }
      next_adv = delta + gamma * lambda * next_adv;
      g.advantages(t, i) = next_adv;
      g.returns(t, i) = next_adv + values(t, i);
      next_value = values(t, i);
    }
  }
  return g;
}

// ---------------------------------------------------------------- loss

template <typename S>
LossTerms ppoLoss(const ActorCritic<S>& net, const PpoBatch<S>& batch, const PpoConfig& cfg,
                  VectorX<S>* grad) {
  const int B = static_cast<int>(batch.obs.cols());
  const int A = net.actDim();
  const S inv_b = S(1) / static_cast<S>(B);

  std::vector<MatrixX<S>> actor_acts;
  net.actor().forward(net.actorParams(), batch.obs, actor_acts);
  const MatrixX<S>& mean = actor_acts.back();
  const VectorX<S> log_std = net.logStd();
  const VectorX<S> inv_std = (-log_std.array()).exp();
  const MatrixX<S> z = (batch.u - mean).array().colwise() * inv_std.array();
  const VectorX<S> log_prob = gaussianLogProb<S>(batch.u, mean, log_std);

  LossTerms out;
  VectorX<S> d_logp(B);
  const double lo = 1.0 - cfg.clip;
  const double hi = 1.0 + cfg.clip;
  for (int j = 0; j < B; ++j) {
    const double log_ratio = static_cast<double>(log_prob[j] - batch.old_log_prob[j]);
    const double ratio = std::exp(log_ratio);
    const double adv = static_cast<double>(batch.advantages[j]);
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, lo, hi) * adv;
    out.policy -= std::min(unclipped, clipped);
    d_logp[j] = unclipped <= clipped ? static_cast<S>(-unclipped / B) : S(0);
    out.approx_kl += (ratio - 1.0) - log_ratio;
    if (std::abs(ratio - 1.0) > cfg.clip) out.clip_fraction += 1.0;
  }
  out.policy /= B;
  out.approx_kl /= B;
  out.clip_fraction /= B;

  std::vector<MatrixX<S>> critic_acts;
  net.critic().forward(net.criticParams(), batch.critic_in, critic_acts);
  const VectorX<S> v_err = critic_acts.back().row(0).transpose() - batch.returns;
  out.value = 0.5 * static_cast<double>(v_err.squaredNorm()) / B;
  out.entropy = static_cast<double>(log_std.sum()) + 0.5 * A * (1.0 + kLog2Pi);
  out.total = out.policy + cfg.value_coef * out.value - cfg.entropy_coef * out.entropy;

  if (grad) {
    grad->setZero(net.params().size());
    const MatrixX<S> d_mean = (z.array().colwise() * inv_std.array()).rowwise() * d_logp.transpose().array();
    net.actor().backward(net.actorParams(), actor_acts, d_mean, grad->data());
    for (int k = 0; k < A; ++k) {
      const S g = (z.row(k).array().square() - S(1)).matrix().dot(d_logp);
      (*grad)[net.logStdOffset() + k] = g - static_cast<S>(cfg.entropy_coef);
    }
    const MatrixX<S> d_v = (static_cast<S>(cfg.value_coef) * inv_b) * v_err.transpose();
    net.critic().backward(net.criticParams(), critic_acts, d_v, grad->data() + net.criticOffset());
  }
  return out;
}

// ---------------------------------------------------------------- Adam

template <typename S>
Adam<S>::Adam(int n, double lr, double eps, double beta1, double beta2)
    : m_(VectorX<S>::Zero(n)), v_(VectorX<S>::Zero(n)), lr_(lr), eps_(eps), beta1_(beta1), beta2_(beta2) {}

template <typename S>
void Adam<S>::step(VectorX<S>& params, const VectorX<S>& grad) {
  ++t_;
  const S b1 = static_cast<S>(beta1_);
  const S b2 = static_cast<S>(beta2_);
  m_ = b1 * m_ + (S(1) - b1) * grad;
  v_ = b2 * v_ + (S(1) - b2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const S step = static_cast<S>(lr_ / c1);
  const S root_c2 = static_cast<S>(std::sqrt(c2));
  params.array() -= step * m_.array() / (v_.array().sqrt() / root_c2 + static_cast<S>(eps_));
}

template <typename S>
double clipGradNorm(VectorX<S>& grad, double max_norm) {
  const double norm = static_cast<double>(grad.norm());
  if (norm > max_norm) grad *= static_cast<S>(max_norm / (norm + 1e-12));
  return norm;
}

// ----------------------------------------------------------- snapshot

Eigen::MatrixXd PolicySnapshot::actDeterministic(const Eigen::MatrixXd& raw_obs) const {
  return net.mean(normalizer.normalize(raw_obs)).array().tanh();
}

namespace {

constexpr char kMagic[4] = {'J', 'G', 'C', 'K'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ConfigError("checkpoint: unexpected end of file");
  return v;
}

// Layer weights are written row-major (out x in), then the bias.
void putMlp(std::ostream& os, const Mlp<double>& net, const double* theta) {
  for (int l = 0; l < net.layers(); ++l) {
    const int in = net.sizes()[l];
    const int out = net.sizes()[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(theta + net.weightOffset(l), out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) put<double>(os, w(r, c));
    }
    for (int r = 0; r < out; ++r) put<double>(os, theta[net.biasOffset(l) + r]);
  }
}

void getMlp(std::istream& is, const Mlp<double>& net, double* theta) {
  for (int l = 0; l < net.layers(); ++l) {
    const int in = net.sizes()[l];
    const int out = net.sizes()[l + 1];
    Eigen::Map<Eigen::MatrixXd> w(theta + net.weightOffset(l), out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) w(r, c) = get<double>(is);
    }
    for (int r = 0; r < out; ++r) theta[net.biasOffset(l) + r] = get<double>(is);
  }
}

}  // namespace

void saveCheckpoint(const PolicySnapshot& s, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, s.frames);
  put<std::uint64_t>(os, s.iterations);
  put<double>(os, s.wall_seconds);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.net.obsDim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.net.actDim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.net.hidden().size()));
  for (int h : s.net.hidden()) put<std::uint32_t>(os, static_cast<std::uint32_t>(h));
  putMlp(os, s.net.actor(), s.net.actorParams());
  for (int k = 0; k < s.net.actDim(); ++k) put<double>(os, s.net.logStd()[k]);
  putMlp(os, s.net.critic(), s.net.criticParams());
  put<double>(os, s.normalizer.count());
  for (int k = 0; k < s.normalizer.dim(); ++k) put<double>(os, s.normalizer.mean()[k]);
  for (int k = 0; k < s.normalizer.dim(); ++k) put<double>(os, s.normalizer.var()[k]);
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

PolicySnapshot loadCheckpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw ConfigError("checkpoint: bad magic in " + path.string());
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto frames = get<std::uint64_t>(is);
  const auto iterations = get<std::uint64_t>(is);
  const auto wall = get<double>(is);
  const auto obs_dim = get<std::uint32_t>(is);
  const auto act_dim = get<std::uint32_t>(is);
  const auto n_hidden = get<std::uint32_t>(is);
  if (obs_dim == 0 || obs_dim > 4096 || act_dim == 0 || act_dim > 64 || n_hidden == 0 || n_hidden > 16) {
    throw ConfigError("checkpoint: implausible network shape");
  }
  std::vector<int> hidden;
  for (std::uint32_t i = 0; i < n_hidden; ++i) {
    const auto h = get<std::uint32_t>(is);
    if (h == 0 || h > 65536) throw ConfigError("checkpoint: implausible hidden size");
    hidden.push_back(static_cast<int>(h));
  }
  PolicySnapshot s{ActorCritic<double>(static_cast<int>(obs_dim), static_cast<int>(act_dim), hidden),
                   ObsNormalizer(static_cast<int>(obs_dim)), frames, iterations, wall};
  double* theta = s.net.params().data();
  getMlp(is, s.net.actor(), theta);
  for (std::uint32_t k = 0; k < act_dim; ++k) theta[s.net.logStdOffset() + k] = get<double>(is);
  getMlp(is, s.net.critic(), theta + s.net.criticOffset());
  const double count = get<double>(is);
  Eigen::VectorXd mean(obs_dim), var(obs_dim);
  for (std::uint32_t k = 0; k < obs_dim; ++k) mean[k] = get<double>(is);
  for (std::uint32_t k = 0; k < obs_dim; ++k) var[k] = get<double>(is);
  s.normalizer.setStats(count, std::move(mean), std::move(var));
  if (is.peek() != std::char_traits<char>::eof()) throw ConfigError("checkpoint: trailing bytes");
  return s;
}

// ------------------------------------------------------------- trainer

PpoTrainer::PpoTrainer(BatchEnvironment& env, PpoConfig cfg, std::uint64_t seed,
                       const Eigen::VectorXd& initial_action)
    : env_(env),
      cfg_((cfg.validate(), std::move(cfg))),
      net_(env.observationDim(), env.actionDim(), cfg_.hidden),
      adam_(static_cast<int>(net_.params().size()), cfg_.learning_rate, cfg_.adam_eps),
      normalizer_(env.observationDim()),
      rng_(seed) {
  net_.initialize(deriveSeed(seed, 0x5EED), cfg_.init_log_std);
  net_.setActionBias(initial_action);
}

PolicySnapshot PpoTrainer::snapshot() const {
  return PolicySnapshot{net_.cast<double>(), normalizer_, frames_, iterations_, wall_seconds_};
}

void PpoTrainer::restore(const PolicySnapshot& s) {
  if (s.net.obsDim() != net_.obsDim() || s.net.actDim() != net_.actDim() || s.net.hidden() != net_.hidden()) {
    throw ConfigError("checkpoint network shape does not match the training configuration");
  }
  net_.params() = s.net.params().cast<float>();
  normalizer_ = s.normalizer;
  frames_ = s.frames;
  iterations_ = s.iterations;
  wall_seconds_ = s.wall_seconds;
}

void PpoTrainer::collectRollout(IterationStats& stats) {
  const int N = env_.size();
  const int T = cfg_.rollout_length;
  const int D = env_.observationDim();
  const int A = env_.actionDim();
  if (!started_) {
    env_.resetAll();
    started_ = true;
  }
  obs_.resize(D, T * N);
  critic_in_.resize(D + 1, T * N);
  u_.resize(A, T * N);
  log_prob_.resize(T * N);
  rewards_.setZero(T, N);
  values_.setZero(T, N);
  terminated_.setZero(T, N);
  truncated_.setZero(T, N);
  truncation_values_.setZero(T, N);

  double return_sum = 0.0;
  double hits_sum = 0.0;
  int episodes = 0;
  for (int t = 0; t < T; ++t) {
    normalizer_.update(env_.observations());
    const MatrixX<float> obs = normalizer_.normalize(env_.observations()).cast<float>();
    const VectorX<float> tf = env_.timeFractions().cast<float>();
    const ActResult r = act<float>(net_, obs, tf, rng_, false);
    obs_.middleCols(t * N, N) = obs;
    critic_in_.middleCols(t * N, N) = criticInput<float>(obs, tf);
    u_.middleCols(t * N, N) = r.pre_squash.cast<float>();
    log_prob_.segment(t * N, N) = r.gaussian_log_prob.cast<float>();
    values_.row(t) = r.value.transpose();

    env_.stepAll(r.action);
    rewards_.row(t) = env_.rewards().transpose() * cfg_.reward_scale;
    bool any_truncated = false;
    for (int i = 0; i < N; ++i) {
      terminated_(t, i) = env_.terminated()[i];
      truncated_(t, i) = env_.truncated()[i];
      any_truncated = any_truncated || env_.truncated()[i];
    }
    if (any_truncated) {
      const MatrixX<float> fin = normalizer_.normalize(env_.finalObservations()).cast<float>();
      const VectorX<float> ftf = env_.finalTimeFractions().cast<float>();
      const Eigen::VectorXd v = net_.value(criticInput<float>(fin, ftf)).cast<double>();
      for (int i = 0; i < N; ++i) {
        if (env_.truncated()[i]) truncation_values_(t, i) = v[i];
      }
    }
    for (const EpisodeStats& e : env_.drainEpisodeStats()) {
      return_sum += e.episode_return;
      hits_sum += e.max_streak;
      ++episodes;
    }
  }
  const MatrixX<float> obs = normalizer_.normalize(env_.observations()).cast<float>();
  last_values_ = net_.value(criticInput<float>(obs, env_.timeFractions().cast<float>())).cast<double>();

  frames_ += static_cast<std::uint64_t>(T) * N;
  stats.frames = frames_;
  stats.episodes = episodes;
  stats.mean_return = episodes ? return_sum / episodes : std::nan("");
  stats.mean_consecutive_hits = episodes ? hits_sum / episodes : std::nan("");
}

void PpoTrainer::update(IterationStats& stats) {
  const int N = env_.size();
  const int T = cfg_.rollout_length;
  const int total = T * N;
  const GaeResult gae = computeGae(rewards_, values_, terminated_, truncated_, truncation_values_, last_values_,
                                   cfg_.gamma, cfg_.gae_lambda);
  VectorX<float> adv(total), ret(total);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < N; ++i) {
      adv[t * N + i] = static_cast<float>(gae.advantages(t, i));
      ret[t * N + i] = static_cast<float>(gae.returns(t, i));
    }
  }
  const double adv_mean = adv.cast<double>().mean();
  const double adv_std = std::sqrt((adv.cast<double>().array() - adv_mean).square().mean());
  adv = ((adv.cast<double>().array() - adv_mean) / (adv_std + 1e-8)).cast<float>();

  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  const int mb = std::max(1, total / cfg_.minibatches);
  PpoBatch<float> batch;
  VectorX<float> grad;
  LossTerms sum;
  double grad_norm_sum = 0.0;
  int updates = 0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng_);
    for (int start = 0; start + mb <= total; start += mb) {
      batch.obs.resize(obs_.rows(), mb);
      batch.critic_in.resize(critic_in_.rows(), mb);
      batch.u.resize(u_.rows(), mb);
      batch.old_log_prob.resize(mb);
      batch.advantages.resize(mb);
      batch.returns.resize(mb);
      for (int j = 0; j < mb; ++j) {
        const int idx = order[start + j];
        batch.obs.col(j) = obs_.col(idx);
        batch.critic_in.col(j) = critic_in_.col(idx);
        batch.u.col(j) = u_.col(idx);
        batch.old_log_prob[j] = log_prob_[idx];
        batch.advantages[j] = adv[idx];
        batch.returns[j] = ret[idx];
      }
      const LossTerms loss = ppoLoss<float>(net_, batch, cfg_, &grad);
      if (!std::isfinite(loss.total) || !grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite PPO loss at iteration " << iterations_ << " epoch " << epoch << ": policy "
            << loss.policy << " value " << loss.value << " entropy " << loss.entropy << "; returns range ["
            << ret.minCoeff() << ", " << ret.maxCoeff() << "], log-std " << net_.logStd().transpose();
        throw TrainingError(msg.str());
      }
      grad_norm_sum += clipGradNorm(grad, cfg_.max_grad_norm);
      adam_.step(net_.params(), grad);
      net_.clampLogStd();
      sum.policy += loss.policy;
      sum.value += loss.value;
      sum.entropy += loss.entropy;
      sum.approx_kl += loss.approx_kl;
      sum.clip_fraction += loss.clip_fraction;
      ++updates;
    }
  }
  stats.policy_loss = sum.policy / updates;
  stats.value_loss = sum.value / updates;
  stats.entropy = sum.entropy / updates;
  stats.approx_kl = sum.approx_kl / updates;
  stats.clip_fraction = sum.clip_fraction / updates;
  stats.grad_norm = grad_norm_sum / updates;
}

IterationStats PpoTrainer::iterate() {
  IterationStats stats;
  collectRollout(stats);
  update(stats);
  ++iterations_;
  stats.iteration = iterations_;
  return stats;
}

std::string trainingCurveHeader() {
  return "iteration,frames,mean_return,mean_consecutive_hits,episodes,policy_loss,value_loss,entropy,approx_kl,"
         "clip_fraction";
}

std::string trainingCurveRow(const IterationStats& s) {
  auto num = [](double x) {
    if (!std::isfinite(x)) return std::string();
    std::ostringstream os;
    os.precision(9);
    os << x;
    return os.str();
  };
  std::ostringstream os;
  os << s.iteration << ',' << s.frames << ',' << num(s.mean_return) << ',' << num(s.mean_consecutive_hits) << ','
     << s.episodes << ',' << num(s.policy_loss) << ',' << num(s.value_loss) << ',' << num(s.entropy) << ','
     << num(s.approx_kl) << ',' << num(s.clip_fraction);
  return os.str();
}

// --------------------------------------------------- instantiations

template class Mlp<float>;
template class Mlp<double>;
template class ActorCritic<float>;
template class ActorCritic<double>;
template ActorCritic<double> ActorCritic<float>::cast<double>() const;
template ActorCritic<float> ActorCritic<double>::cast<float>() const;
template VectorX<float> gaussianLogProb<float>(const MatrixX<float>&, const MatrixX<float>&, const VectorX<float>&);
template VectorX<double> gaussianLogProb<double>(const MatrixX<double>&, const MatrixX<double>&,
                                                 const VectorX<double>&);
template ActResult act<float>(const ActorCritic<float>&, const MatrixX<float>&, const VectorX<float>&,
                              std::mt19937_64&, bool);
template ActResult act<double>(const ActorCritic<double>&, const MatrixX<double>&, const VectorX<double>&,
                               std::mt19937_64&, bool);
template LossTerms ppoLoss<float>(const ActorCritic<float>&, const PpoBatch<float>&, const PpoConfig&,
                                  VectorX<float>*);
template LossTerms ppoLoss<double>(const ActorCritic<double>&, const PpoBatch<double>&, const PpoConfig&,
                                   VectorX<double>*);
template class Adam<float>;
template class Adam<double>;
template double clipGradNorm<float>(VectorX<float>&, double);
template double clipGradNorm<double>(VectorX<double>&, double);

}  // namespace juggle
