#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "juggle/env.hpp"

namespace juggle {

/// Raised when training produces non-finite values.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int epochs = 4;
  int minibatches = 8;
  double learning_rate = 3e-4;
  double entropy_coef = 1e-3;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  int rollout_length = 64;
  std::vector<int> hidden{256, 256};
  double init_log_std = -0.5;
  double adam_eps = 1e-5;
  /// Multiplies environment rewards before they enter the learner.
  double reward_scale = 1.0;

  void validate() const;
};

template <typename S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Fully connected tanh network over a flat parameter array. Each layer holds
/// a column-major (out x in) weight block followed by its bias.
template <typename S>
class Mlp {
 public:
  explicit Mlp(std::vector<int> sizes);

  int inputDim() const { return sizes_.front(); }
  int outputDim() const { return sizes_.back(); }
  int layers() const { return static_cast<int>(sizes_.size()) - 1; }
  int paramCount() const { return param_count_; }
  const std::vector<int>& sizes() const { return sizes_; }
  int weightOffset(int layer) const { return offsets_[layer]; }
  int biasOffset(int layer) const { return offsets_[layer] + sizes_[layer + 1] * sizes_[layer]; }

  /// acts[0] = x, acts[l] = output of layer l (tanh except the last).
  void forward(const S* theta, const MatrixX<S>& x, std::vector<MatrixX<S>>& acts) const;
  MatrixX<S> forward(const S* theta, const MatrixX<S>& x) const;
  /// Accumulates d(loss)/d(theta) into grad given d(loss)/d(output).
  void backward(const S* theta, const std::vector<MatrixX<S>>& acts, const MatrixX<S>& d_out,
                S* grad) const;

 private:
  std::vector<int> sizes_;
  std::vector<int> offsets_;
  int param_count_ = 0;
};

/// Gaussian actor over pre-squash actions plus a critic that also sees the
/// normalized episode time. All parameters live in one flat vector:
/// [actor | log-std | critic].
template <typename S>
class ActorCritic {
 public:
  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 1.0;

  ActorCritic(int obs_dim, int act_dim, const std::vector<int>& hidden);

  int obsDim() const { return obs_dim_; }
  int actDim() const { return act_dim_; }
  const Mlp<S>& actor() const { return actor_; }
  const Mlp<S>& critic() const { return critic_; }
  const std::vector<int>& hidden() const { return hidden_; }

  VectorX<S>& params() { return theta_; }
  const VectorX<S>& params() const { return theta_; }
  int logStdOffset() const { return actor_.paramCount(); }
  int criticOffset() const { return actor_.paramCount() + act_dim_; }
  const S* actorParams() const { return theta_.data(); }
  const S* criticParams() const { return theta_.data() + criticOffset(); }
  Eigen::Map<const VectorX<S>> logStd() const { return {theta_.data() + logStdOffset(), act_dim_}; }

  /// Scaled-normal weights, zero biases, small output layer for the actor,
  /// constant log-std.
  void initialize(std::uint64_t seed, double init_log_std);
  /// Centre the actor output so that tanh(mean) starts at `action`.
  void setActionBias(const Eigen::VectorXd& action);
  void clampLogStd();

  MatrixX<S> mean(const MatrixX<S>& obs) const { return actor_.forward(actorParams(), obs); }
  VectorX<S> value(const MatrixX<S>& critic_in) const;

  template <typename T>
  ActorCritic<T> cast() const;

 private:
  int obs_dim_;
  int act_dim_;
  std::vector<int> hidden_;
  Mlp<S> actor_;
  Mlp<S> critic_;
  VectorX<S> theta_;
};

/// log N(u; mean, exp(log_std)) summed over action dimensions, per column.
template <typename S>
VectorX<S> gaussianLogProb(const MatrixX<S>& u, const MatrixX<S>& mean, const VectorX<S>& log_std);

/// Log density of a = tanh(u) under the squashed Gaussian.
double squashedLogProb(const Eigen::VectorXd& u, const Eigen::VectorXd& mean,
                       const Eigen::VectorXd& log_std);

/// Entropy of the squashed Gaussian, per-dimension Gauss-Hermite quadrature.
double squashedEntropy(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std, int nodes = 64);

/// Running mean/variance of observations, merged batch-wise.
class ObsNormalizer {
 public:
  static constexpr double kClip = 10.0;
  static constexpr double kEps = 1e-8;

  explicit ObsNormalizer(int dim = 0);

  void update(const Eigen::MatrixXd& batch);
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& batch) const;

  int dim() const { return static_cast<int>(mean_.size()); }
  double count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::VectorXd& var() const { return var_; }
  void setStats(double count, Eigen::VectorXd mean, Eigen::VectorXd var);

 private:
  double count_ = 0.0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd var_;
};

struct ActResult {
  Eigen::MatrixXd action;      // squashed, in [-1, 1]
  Eigen::MatrixXd pre_squash;  // Gaussian sample u
  Eigen::VectorXd log_prob;    // squashed density, Jacobian-corrected
  Eigen::VectorXd gaussian_log_prob;  // density of u, used for importance ratios
  Eigen::VectorXd value;
};

/// Sample actions for a batch of already-normalized observations. With
/// `deterministic` the action is tanh(mean) and log_prob is left empty.
template <typename S>
ActResult act(const ActorCritic<S>& net, const MatrixX<S>& obs, const VectorX<S>& time_fraction,
              std::mt19937_64& rng, bool deterministic);

/// Generalized advantage estimation over a (T x N) rollout. A terminated step
/// cuts the tail; a truncated step bootstraps from `truncation_values`.
struct GaeResult {
  Eigen::MatrixXd advantages;
  Eigen::MatrixXd returns;
};
GaeResult computeGae(const Eigen::MatrixXd& rewards, const Eigen::MatrixXd& values,
                     const Eigen::MatrixXd& terminated, const Eigen::MatrixXd& truncated,
                     const Eigen::MatrixXd& truncation_values, const Eigen::VectorXd& last_values,
                     double gamma, double lambda);

/// One minibatch for the clipped-surrogate loss. Columns are samples.
template <typename S>
struct PpoBatch {
  MatrixX<S> obs;        // normalized actor inputs
  MatrixX<S> critic_in;  // normalized actor inputs plus time fraction
  MatrixX<S> u;          // pre-squash actions
  VectorX<S> old_log_prob;  // Gaussian log-prob of u under the behaviour policy
  VectorX<S> advantages;
  VectorX<S> returns;
};

struct LossTerms {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

/// Clipped surrogate + value_coef * value loss - entropy_coef * Gaussian
/// entropy. Writes d(total)/d(params) into `grad` when non-null.
template <typename S>
LossTerms ppoLoss(const ActorCritic<S>& net, const PpoBatch<S>& batch, const PpoConfig& cfg,
                  VectorX<S>* grad);

template <typename S>
class Adam {
 public:
  Adam(int n, double lr, double eps, double beta1 = 0.9, double beta2 = 0.999);
  void step(VectorX<S>& params, const VectorX<S>& grad);
  void setLearningRate(double lr) { lr_ = lr; }
  long steps() const { return t_; }

 private:
  VectorX<S> m_;
  VectorX<S> v_;
  double lr_, eps_, beta1_, beta2_;
  long t_ = 0;
};

/// Scale grad so its global norm is at most max_norm. Returns the norm before.
template <typename S>
double clipGradNorm(VectorX<S>& grad, double max_norm);

/// Network plus the frozen normalizer, as saved in a checkpoint.
struct PolicySnapshot {
  ActorCritic<double> net;
  ObsNormalizer normalizer;
  std::uint64_t frames = 0;
  std::uint64_t iterations = 0;
  double wall_seconds = 0.0;

  /// Deterministic actions for raw (unnormalized) observations.
  Eigen::MatrixXd actDeterministic(const Eigen::MatrixXd& raw_obs) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;
void saveCheckpoint(const PolicySnapshot& snapshot, const std::filesystem::path& path);
PolicySnapshot loadCheckpoint(const std::filesystem::path& path);

struct IterationStats {
  std::uint64_t iteration = 0;
  std::uint64_t frames = 0;
  int episodes = 0;              // episodes finished during the rollout
  double mean_return = 0.0;      // NaN when no episode finished
  double mean_consecutive_hits = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
};

/// Rollout -> GAE -> clipped-surrogate update loop over a batch environment.
class PpoTrainer {
 public:
  PpoTrainer(BatchEnvironment& env, PpoConfig cfg, std::uint64_t seed,
             const Eigen::VectorXd& initial_action);

  IterationStats iterate();

  PolicySnapshot snapshot() const;
  /// Resume from a checkpoint; optimizer moments restart from zero.
  void restore(const PolicySnapshot& snapshot);
  const ActorCritic<float>& network() const { return net_; }
  const ObsNormalizer& normalizer() const { return normalizer_; }
  std::uint64_t frames() const { return frames_; }
  std::uint64_t iterations() const { return iterations_; }
  void addWallSeconds(double s) { wall_seconds_ += s; }

 private:
  void collectRollout(IterationStats& stats);
  void update(IterationStats& stats);

  BatchEnvironment& env_;
  PpoConfig cfg_;
  ActorCritic<float> net_;
  Adam<float> adam_;
  ObsNormalizer normalizer_;
  std::mt19937_64 rng_;
  std::uint64_t frames_ = 0;
  std::uint64_t iterations_ = 0;
  double wall_seconds_ = 0.0;
  bool started_ = false;

  // Rollout storage; sample index = t * N + env.
  MatrixX<float> obs_;
  MatrixX<float> critic_in_;
  MatrixX<float> u_;
  VectorX<float> log_prob_;
  Eigen::MatrixXd rewards_, values_, terminated_, truncated_, truncation_values_;
  Eigen::VectorXd last_values_;
};

/// CSV header and row for training curves.
std::string trainingCurveHeader();
std::string trainingCurveRow(const IterationStats& s);

}  // namespace juggle
