#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "juggle/ppo.hpp"

using namespace juggle;

namespace {

// Fixed-size batch of toy environments implementing the learner interface.
class ToyBatch : public BatchEnvironment {
 public:
  ToyBatch(int n, int obs_dim, int act_dim, int horizon)
      : n_(n), horizon_(horizon), obs_(Eigen::MatrixXd::Zero(obs_dim, n)), tf_(Eigen::VectorXd::Zero(n)),
        rew_(Eigen::VectorXd::Zero(n)), term_(n, 0), trunc_(n, 0), fin_(obs_), fin_tf_(tf_), act_dim_(act_dim) {}

  int size() const override { return n_; }
  int observationDim() const override { return static_cast<int>(obs_.rows()); }
  int actionDim() const override { return act_dim_; }
  const Eigen::MatrixXd& observations() const override { return obs_; }
  const Eigen::VectorXd& timeFractions() const override { return tf_; }
  const Eigen::VectorXd& rewards() const override { return rew_; }
  const std::vector<std::uint8_t>& terminated() const override { return term_; }
  const std::vector<std::uint8_t>& truncated() const override { return trunc_; }
  const Eigen::MatrixXd& finalObservations() const override { return fin_; }
  const Eigen::VectorXd& finalTimeFractions() const override { return fin_tf_; }
  std::vector<EpisodeStats> drainEpisodeStats() override { return std::exchange(done_, {}); }

 protected:
  int n_, horizon_;
  Eigen::MatrixXd obs_;
  Eigen::VectorXd tf_, rew_;
  std::vector<std::uint8_t> term_, trunc_;
  Eigen::MatrixXd fin_;
  Eigen::VectorXd fin_tf_;
  std::vector<EpisodeStats> done_;
  int act_dim_;
};

// Single state, constant reward, no episode end.
class ConstantReward : public ToyBatch {
 public:
  explicit ConstantReward(int n) : ToyBatch(n, 1, 1, 0) {}
  void resetAll() override { obs_.setConstant(0.5); }
  void stepAll(const Eigen::MatrixXd&) override { rew_.setOnes(); }
};

// Point mass on a vertical line. Action is net acceleration g*a; reward
// penalizes distance to the 1 m set point.
class HoverHold1D : public ToyBatch {
 public:
  explicit HoverHold1D(int n) : ToyBatch(n, 2, 1, 100), z_(n), vz_(n), t_(n, 0), ret_(n, 0.0), rng_(3) {}

  void resetAll() override {
    for (int i = 0; i < n_; ++i) reset(i);
  }

  void stepAll(const Eigen::MatrixXd& a) override {
    constexpr double dt = 0.05;
    for (int i = 0; i < n_; ++i) {
      vz_[i] += 9.81 * a(0, i) * dt;
      z_[i] += vz_[i] * dt;
      rew_[i] = 1.0 - std::min(std::abs(z_[i] - 1.0), 2.0);
      ret_[i] += rew_[i];
      ++t_[i];
      term_[i] = 0;
      trunc_[i] = t_[i] >= horizon_;
      if (trunc_[i]) {
        write(i);
        fin_.col(i) = obs_.col(i);
        fin_tf_[i] = tf_[i];
        done_.push_back({i, ret_[i], t_[i], 0, 0, TerminationReason::kTruncated});
        reset(i);
      } else {
        write(i);
      }
    }
  }

 private:
  void reset(int i) {
    std::uniform_real_distribution<double> u(0.4, 1.6);
    z_[i] = u(rng_);
    vz_[i] = 0.0;
    t_[i] = 0;
    ret_[i] = 0.0;
    write(i);
  }
  void write(int i) {
    obs_(0, i) = z_[i] - 1.0;
    obs_(1, i) = vz_[i];
    tf_[i] = static_cast<double>(t_[i]) / horizon_;
  }

  std::vector<double> z_, vz_;
  std::vector<int> t_;
  std::vector<double> ret_;
  std::mt19937_64 rng_;
};

ActorCritic<double> smallNet(int obs, int act, int hidden, std::uint64_t seed) {
  ActorCritic<double> net(obs, act, {hidden});
  net.initialize(seed, -0.3);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> n(0.0, 0.5);
  for (int k = 0; k < net.params().size(); ++k) net.params()[k] += n(rng);
  return net;
}

PpoBatch<double> randomBatch(const ActorCritic<double>& net, int B, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  PpoBatch<double> b;
  b.obs = Eigen::MatrixXd::NullaryExpr(net.obsDim(), B, [&] { return n(rng); });
  b.critic_in.resize(net.obsDim() + 1, B);
  b.critic_in.topRows(net.obsDim()) = b.obs;
  b.critic_in.bottomRows(1) = Eigen::RowVectorXd::NullaryExpr(B, [&] { return 0.5 + 0.3 * n(rng); });
  const Eigen::MatrixXd mean = net.mean(b.obs);
  const Eigen::VectorXd sd = net.logStd().array().exp();
  b.u = mean + (sd.asDiagonal() * Eigen::MatrixXd::NullaryExpr(net.actDim(), B, [&] { return n(rng); }));
  // Behaviour log-probs within 5% of the current ones keep every ratio away from the clip edges.
  const Eigen::VectorXd lp = gaussianLogProb<double>(b.u, mean, net.logStd());
  b.old_log_prob = lp.unaryExpr([&](double x) { return x + 0.05 * (2.0 * std::uniform_real_distribution<double>(0, 1)(rng) - 1.0); });
  b.advantages = Eigen::VectorXd::NullaryExpr(B, [&] { return n(rng); });
  b.returns = Eigen::VectorXd::NullaryExpr(B, [&] { return 2.0 * n(rng); });
  return b;
}

template <typename F>
Eigen::VectorXd centralDifference(Eigen::VectorXd theta, F&& f, double h) {
  Eigen::VectorXd g(theta.size());
  for (int k = 0; k < theta.size(); ++k) {
    const double keep = theta[k];
    theta[k] = keep + h;
    const double up = f(theta);
    theta[k] = keep - h;
    const double down = f(theta);
    theta[k] = keep;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

double maxRelativeError(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0.0;
  for (int k = 0; k < a.size(); ++k) {
    const double denom = std::max(std::abs(a[k]) + std::abs(b[k]), 1e-7);
    worst = std::max(worst, std::abs(a[k] - b[k]) / denom);
  }
  return worst;
}

}  // namespace

TEST_SUITE("ppo") {

TEST_CASE("zero weights give a zero mean and centred action") {
  ActorCritic<double> net(5, 3, {8, 8});
  net.params().setZero();
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(5, 4);
  CHECK(net.mean(obs).norm() == 0.0);
  std::mt19937_64 rng(1);
  const ActResult r = act<double>(net, obs, Eigen::VectorXd::Zero(4), rng, true);
  CHECK(r.action.norm() == 0.0);
}

TEST_CASE("deterministic act is tanh of the mean") {
  const ActorCritic<double> net = smallNet(4, 2, 6, 3);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(4, 7);
  std::mt19937_64 rng(1);
  const ActResult r = act<double>(net, obs, Eigen::VectorXd::Zero(7), rng, true);
  CHECK((r.action - net.mean(obs).array().tanh().matrix()).norm() == 0.0);
  CHECK(r.log_prob.size() == 0);
}

TEST_CASE("squashed log-density matches a Monte Carlo histogram") {
  const Eigen::VectorXd mean = Eigen::VectorXd::Constant(1, 0.3);
  const Eigen::VectorXd log_std = Eigen::VectorXd::Constant(1, std::log(0.6));
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.3, 0.6);
  constexpr int kSamples = 1'000'000;
  constexpr double lo = -0.5, hi = 0.9, width = 0.05;
  const int bins = static_cast<int>(std::lround((hi - lo) / width));
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < kSamples; ++i) {
    const double a = std::tanh(n(rng));
    if (a >= lo && a < hi) ++counts[static_cast<int>((a - lo) / width)];
  }
  for (int b = 0; b < bins; ++b) {
    // Average the density over the bin with Simpson's rule on a = tanh(u).
    const double a0 = lo + b * width, a1 = a0 + width, am = 0.5 * (a0 + a1);
    auto density = [&](double a) {
      return std::exp(squashedLogProb(Eigen::VectorXd::Constant(1, std::atanh(a)), mean, log_std));
    };
    const double expected = (density(a0) + 4 * density(am) + density(a1)) / 6.0;
    const double empirical = counts[b] / (kSamples * width);
    CHECK(std::abs(empirical / expected - 1.0) < 0.02);
  }
}

TEST_CASE("sampled log-prob includes the tanh correction") {
  const ActorCritic<double> net = smallNet(3, 2, 4, 5);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(3, 5);
  std::mt19937_64 rng(2);
  const ActResult r = act<double>(net, obs, Eigen::VectorXd::Zero(5), rng, false);
  const Eigen::MatrixXd mean = net.mean(obs);
  for (int j = 0; j < 5; ++j) {
    double lp = 0.0;
    for (int k = 0; k < 2; ++k) {
      const double sd = std::exp(net.logStd()[k]);
      const double z = (r.pre_squash(k, j) - mean(k, j)) / sd;
      const double a = std::tanh(r.pre_squash(k, j));
      lp += -0.5 * z * z - std::log(sd) - 0.5 * std::log(2 * M_PI) - std::log(1 - a * a);
    }
    CHECK(r.log_prob[j] == doctest::Approx(lp).epsilon(1e-9));
  }
}

TEST_CASE("squashed entropy matches a Monte Carlo estimate") {
  const Eigen::VectorXd mean = Eigen::Vector2d(0.2, -0.7);
  const Eigen::VectorXd log_std = Eigen::Vector2d(-0.4, 0.3);
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0.0, 1.0);
  double sum = 0.0;
  constexpr int kSamples = 200000;
  for (int i = 0; i < kSamples; ++i) {
    Eigen::VectorXd u(2);
    for (int k = 0; k < 2; ++k) u[k] = mean[k] + std::exp(log_std[k]) * n(rng);
    sum -= squashedLogProb(u, mean, log_std);
  }
  CHECK(squashedEntropy(mean, log_std) == doctest::Approx(sum / kSamples).epsilon(5e-3));
}

// Squashing saturates wide distributions, so entropy peaks near unit std;
// below that it falls monotonically with the log-std.
TEST_CASE("squashed entropy falls with the log-std") {
  const Eigen::VectorXd mean = Eigen::VectorXd::Constant(2, 0.2);
  double prev = INFINITY;
  for (double ls = -0.5; ls >= -4.0; ls -= 0.25) {
    const double h = squashedEntropy(mean, Eigen::VectorXd::Constant(2, ls));
    CHECK(h < prev);
    prev = h;
  }
}

TEST_CASE("single-step advantage with undiscounted bootstrap") {
  const Eigen::MatrixXd r = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const Eigen::MatrixXd v = Eigen::MatrixXd::Constant(1, 1, 0.5);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(1, 1);
  const GaeResult g = computeGae(r, v, zero, zero, zero, Eigen::VectorXd::Constant(1, 3.0), 1.0, 0.95);
  CHECK(g.advantages(0, 0) == doctest::Approx(2.0 + 3.0 - 0.5));
}

TEST_CASE("three-step advantage recursion") {
  const Eigen::MatrixXd r = Eigen::MatrixXd::Ones(3, 1);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 1);
  const GaeResult g = computeGae(r, zero, zero, zero, zero, Eigen::VectorXd::Zero(1), 0.99, 0.95);
  const double k = 0.99 * 0.95;
  CHECK(g.advantages(0, 0) == doctest::Approx(1 + k * (1 + k)).epsilon(1e-12));
  CHECK(g.advantages(0, 0) == doctest::Approx(2.825).epsilon(1e-4));
}

TEST_CASE("termination cuts the bootstrap, truncation uses the final value") {
  Eigen::MatrixXd r(2, 2), v(2, 2), term = Eigen::MatrixXd::Zero(2, 2), trunc = term, tv = term;
  r << 1.0, 1.0, 1.0, 1.0;
  v << 0.4, 0.4, 0.7, 0.7;
  term(0, 0) = 1.0;
  trunc(0, 1) = 1.0;
  tv(0, 1) = 5.0;
  const GaeResult g = computeGae(r, v, term, trunc, tv, Eigen::VectorXd::Constant(2, 9.0), 0.9, 0.8);
  CHECK(g.advantages(0, 0) == doctest::Approx(1.0 - 0.4));
  CHECK(g.advantages(0, 1) == doctest::Approx(1.0 + 0.9 * 5.0 - 0.4));
  CHECK(g.returns(1, 0) == doctest::Approx(1.0 + 0.9 * 9.0));
}

TEST_CASE("loss gradient matches central differences") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const ActorCritic<double> net = smallNet(3, 2, 2, seed);
    const PpoBatch<double> batch = randomBatch(net, 8, seed + 10);
    PpoConfig cfg;
    cfg.entropy_coef = 0.01;
    Eigen::VectorXd grad;
    ppoLoss<double>(net, batch, cfg, &grad);
    ActorCritic<double> probe = net;
    const Eigen::VectorXd fd = centralDifference(
        net.params(),
        [&](const Eigen::VectorXd& th) {
          probe.params() = th;
          return ppoLoss<double>(probe, batch, cfg, nullptr).total;
        },
        1e-5);
    CHECK(maxRelativeError(grad, fd) < 1e-4);
  }
}

TEST_CASE("unit ratio reduces to the vanilla policy gradient") {
  const ActorCritic<double> net = smallNet(4, 2, 5, 7);
  PpoBatch<double> batch = randomBatch(net, 16, 8);
  batch.old_log_prob = gaussianLogProb<double>(batch.u, net.mean(batch.obs), net.logStd());
  PpoConfig cfg;
  cfg.value_coef = 0.0;
  cfg.entropy_coef = 0.0;
  Eigen::VectorXd grad;
  ppoLoss<double>(net, batch, cfg, &grad);
  ActorCritic<double> probe = net;
  const Eigen::VectorXd fd = centralDifference(
      net.params(),
      [&](const Eigen::VectorXd& th) {
        probe.params() = th;
        const Eigen::VectorXd lp = gaussianLogProb<double>(batch.u, probe.mean(batch.obs), probe.logStd());
        return -(batch.advantages.array() * lp.array()).mean();
      },
      1e-6);
  const int n_actor = net.criticOffset();
  CHECK(maxRelativeError(grad.head(n_actor), fd.head(n_actor)) < 1e-5);
}

TEST_CASE("zero advantages leave only value and entropy terms") {
  const ActorCritic<double> net = smallNet(3, 2, 4, 9);
  PpoBatch<double> batch = randomBatch(net, 8, 10);
  batch.advantages.setZero();
  PpoConfig cfg;
  cfg.entropy_coef = 0.01;
  Eigen::VectorXd grad;
  const LossTerms l = ppoLoss<double>(net, batch, cfg, &grad);
  CHECK(l.policy == 0.0);
  CHECK(grad.head(net.logStdOffset()).norm() == 0.0);
  for (int k = 0; k < 2; ++k) CHECK(grad[net.logStdOffset() + k] == doctest::Approx(-0.01));
  CHECK(grad.tail(grad.size() - net.criticOffset()).norm() > 0.0);
}

TEST_CASE("normalizer merges batches like one pass") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(3.0, 2.0);
  const Eigen::MatrixXd all = Eigen::MatrixXd::NullaryExpr(3, 300, [&] { return n(rng); });
  ObsNormalizer norm(3);
  norm.update(all.leftCols(17));
  norm.update(all.middleCols(17, 200));
  norm.update(all.rightCols(83));
  const Eigen::VectorXd mean = all.rowwise().mean();
  const Eigen::VectorXd var = (all.colwise() - mean).array().square().rowwise().mean();
  CHECK((norm.mean() - mean).norm() < 1e-12);
  CHECK((norm.var() - var).norm() < 1e-10);
  const Eigen::MatrixXd z = norm.normalize(all);
  CHECK(z.rowwise().mean().norm() < 1e-9);
  CHECK(z.cwiseAbs().maxCoeff() <= ObsNormalizer::kClip);
}

TEST_CASE("Adam first step moves each parameter by the learning rate") {
  Adam<double> adam(3, 0.1, 1e-12);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
  adam.step(p, Eigen::Vector3d(2.0, -0.5, 1e-3));
  CHECK(p[0] == doctest::Approx(-0.1));
  CHECK(p[1] == doctest::Approx(0.1));
  CHECK(p[2] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("gradient clipping") {
  Eigen::VectorXd g = Eigen::Vector2d(3.0, 4.0);
  CHECK(clipGradNorm(g, 1.0) == 5.0);
  CHECK(g.norm() == doctest::Approx(1.0));
  Eigen::VectorXd h = Eigen::Vector2d(0.3, 0.4);
  clipGradNorm(h, 1.0);
  CHECK(h == Eigen::Vector2d(0.3, 0.4));
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  HoverHold1D env(4);
  PpoConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.rollout_length = 16;
  cfg.hidden = {8};
  PpoTrainer trainer(env, cfg, 1, Eigen::VectorXd::Zero(1));
  const Eigen::VectorXf before = trainer.network().params();
  trainer.iterate();
  trainer.iterate();
  CHECK(trainer.network().params() == before);
}

TEST_CASE("training is reproducible under a fixed seed") {
  auto run = [] {
    HoverHold1D env(8);
    PpoConfig cfg;
    cfg.rollout_length = 32;
    cfg.hidden = {16, 16};
    PpoTrainer trainer(env, cfg, 5, Eigen::VectorXd::Zero(1));
    for (int i = 0; i < 3; ++i) trainer.iterate();
    return Eigen::VectorXf(trainer.network().params());
  };
  CHECK(run() == run());
}

TEST_CASE("critic fits a constant-reward return") {
  ConstantReward env(8);
  PpoConfig cfg;
  cfg.gamma = 0.9;
  cfg.rollout_length = 32;
  cfg.epochs = 4;
  cfg.minibatches = 2;
  cfg.learning_rate = 3e-3;
  cfg.hidden = {16};
  PpoTrainer trainer(env, cfg, 2, Eigen::VectorXd::Zero(1));
  for (int i = 0; i < 600; ++i) trainer.iterate();  // 4800 updates
  const PolicySnapshot s = trainer.snapshot();
  Eigen::MatrixXd in(2, 1);
  in << s.normalizer.normalize(Eigen::MatrixXd::Constant(1, 1, 0.5))(0, 0), 0.0;
  CHECK(s.net.value(in)[0] == doctest::Approx(10.0).epsilon(0.01));
}

TEST_CASE("hover-hold return improves within 50 iterations") {
  HoverHold1D env(16);
  PpoConfig cfg;
  cfg.rollout_length = 100;
  cfg.hidden = {32, 32};
  cfg.learning_rate = 1e-3;
  cfg.gamma = 0.95;
  PpoTrainer trainer(env, cfg, 3, Eigen::VectorXd::Zero(1));
  std::vector<double> returns;
  for (int i = 0; i < 50; ++i) returns.push_back(trainer.iterate().mean_return);
  const double early = (returns[0] + returns[1] + returns[2]) / 3.0;
  const double late = (returns[47] + returns[48] + returns[49]) / 3.0;
  CHECK(late > early + 10.0);
}

TEST_CASE("checkpoint round trip") {
  const auto path = std::filesystem::temp_directory_path() / "juggle_ckpt_test.ckpt";
  ActorCritic<double> net = smallNet(4, 2, 6, 12);
  ObsNormalizer norm(4);
  norm.update(Eigen::MatrixXd::Random(4, 10));
  const PolicySnapshot s{net, norm, 1234, 5, 6.5};
  saveCheckpoint(s, path);
  const PolicySnapshot back = loadCheckpoint(path);
  CHECK(back.net.params() == s.net.params());
  CHECK(back.net.hidden() == s.net.hidden());
  CHECK(back.normalizer.mean() == s.normalizer.mean());
  CHECK(back.normalizer.var() == s.normalizer.var());
  CHECK(back.frames == 1234);
  CHECK(back.iterations == 5);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  CHECK_THROWS_AS(loadCheckpoint(path), ConfigError);
  std::filesystem::resize_file(path, 20);
  CHECK_THROWS_AS(loadCheckpoint(path), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("restore rejects a different network shape") {
  HoverHold1D env(2);
  PpoConfig cfg;
  cfg.hidden = {8};
  PpoTrainer trainer(env, cfg, 1, Eigen::VectorXd::Zero(1));
  const PolicySnapshot other{ActorCritic<double>(2, 1, {16}), ObsNormalizer(2), 0, 0, 0.0};
  CHECK_THROWS_AS(trainer.restore(other), ConfigError);
}

TEST_CASE("config validation") {
  PpoConfig cfg;
  cfg.clip = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.hidden = {};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

}  // TEST_SUITE
