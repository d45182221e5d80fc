#include <cmath>
#include <random>
#include <unordered_set>

#include <gtest/gtest.h>

#include "granule/noise.hpp"
#include "granule/trainer.hpp"
#include "oracles/oracles.hpp"

using namespace granule;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  Matrix m(r, c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  for (double& v : m.values()) v = g(rng);
  return m;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

// Central differences of `loss` with respect to every parameter of `params`.
std::vector<double> fd_params(ModelParams params, const std::function<double(const ModelParams&)>& loss, double h) {
  std::vector<double> out;
  for (auto block : params.blocks()) {
    for (double& w : block) {
      const double keep = w;
      w = keep + h;
      const double up = loss(params);
      w = keep - h;
      const double down = loss(params);
      w = keep;
      out.push_back((up - down) / (2.0 * h));
    }
  }
  return out;
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  for (auto block : p.blocks()) out.insert(out.end(), block.begin(), block.end());
  return out;
}

Partition mixed_partition() {
  Partition p;
  p.source_size = 7;
  p.balls.push_back({{0, 3, 4}, {}, 0, 1.0});
  p.balls.push_back({{1}, {}, 2, 1.0});
  p.balls.push_back({{2, 6}, {}, 1, 1.0});
  p.balls.push_back({{5}, {}, 1, 1.0});
  return p;
}

Dataset distinct_label_data(std::size_t n) {
  Dataset d;
  d.features = random_matrix(n, 5, 77);
  d.classes = n;
  for (std::size_t i = 0; i < n; ++i) {
    d.labels.push_back(static_cast<ClassId>(i));
    d.clean_labels.emplace_back(static_cast<ClassId>(i));
  }
  return d;
}

}  // namespace

TEST(Loss, UniformLogitsGiveLogClasses) {
  const Matrix z(3, 10, 0.25);
  const auto r = loss_and_grads(z, std::vector<ClassId>{0, 4, 9}, LossWeighting::per_ball);
  EXPECT_NEAR(r.loss, std::log(10.0), 1e-12);
  EXPECT_NEAR(r.grad_logits(0, 0), (0.1 - 1.0) / 3.0, 1e-15);
  EXPECT_NEAR(r.grad_logits(0, 1), 0.1 / 3.0, 1e-15);
}

TEST(Loss, StableForLargeLogits) {
  const Matrix z(1, 2, std::vector<double>{1000.0, 0.0});
  const auto r = loss_and_grads(z, std::vector<ClassId>{1}, LossWeighting::per_ball);
  EXPECT_NEAR(r.loss, 1000.0, 1e-9);
}

TEST(Loss, SizeWeighting) {
  const Matrix z(2, 2, std::vector<double>{0.0, 0.0, 5.0, 0.0});
  const std::vector<ClassId> y{0, 0};
  const std::vector<std::size_t> sizes{3, 1};
  const auto per_ball = loss_and_grads(z, y, LossWeighting::per_ball, sizes);
  const auto weighted = loss_and_grads(z, y, LossWeighting::size_weighted, sizes);
  const double l0 = std::log(2.0), l1 = std::log1p(std::exp(-5.0));
  EXPECT_NEAR(per_ball.loss, 0.5 * l0 + 0.5 * l1, 1e-12);
  EXPECT_NEAR(weighted.loss, 0.75 * l0 + 0.25 * l1, 1e-12);
}

TEST(Loss, MatchesFiniteDifferences) {
  const Matrix z = random_matrix(4, 5, 3, 2.0);
  const std::vector<ClassId> y{1, 0, 4, 2};
  const std::vector<std::size_t> sizes{2, 5, 1, 3};
  for (auto w : {LossWeighting::per_ball, LossWeighting::size_weighted}) {
    const auto r = loss_and_grads(z, y, w, sizes);
    auto f = [&](std::span<const double> flat) {
      return loss_and_grads(Matrix(4, 5, std::vector<double>(flat.begin(), flat.end())), y, w, sizes).loss;
    };
    const auto fd = oracle::central_difference(f, std::vector<double>(z.values().begin(), z.values().end()), 1e-6);
    for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_LE(rel_err(r.grad_logits.values()[i], fd[i]), 1e-6);
  }
}

TEST(Loss, Errors) {
  EXPECT_THROW(loss_and_grads(Matrix(0, 3), std::vector<ClassId>{}, LossWeighting::per_ball), DomainError);
  EXPECT_THROW(loss_and_grads(Matrix(1, 3), std::vector<ClassId>{3}, LossWeighting::per_ball), DomainError);
}

TEST(Gradients, EndToEndMatchesFiniteDifferences) {
  const auto params = ModelParams::initialize({4, 8, 6, 3}, 5);
  ASSERT_LE(params.parameter_count(), 500u);
  const Matrix x = random_matrix(7, 4, 6);
  const Partition p = mixed_partition();
  const std::vector<ClassId> ball_labels{0, 2, 1, 1};
  for (auto w : {LossWeighting::per_ball, LossWeighting::size_weighted}) {
    const auto g = compute_gradients(params, x, p, ball_labels, BackwardMode::mean_scaled, w);
    const auto fd = fd_params(
        params,
        [&](const ModelParams& q) {
          return compute_gradients(q, x, p, ball_labels, BackwardMode::mean_scaled, w).loss;
        },
        1e-5);
    const auto analytic = flatten(g.grads);
    ASSERT_EQ(analytic.size(), fd.size());
    for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_LE(rel_err(analytic[i], fd[i]), 1e-4) << i;
  }
}

TEST(Gradients, IndividualMatchesFiniteDifferences) {
  const auto params = ModelParams::initialize({4, 8, 6, 3}, 8);
  const Matrix x = random_matrix(5, 4, 9);
  const std::vector<ClassId> y{0, 1, 2, 2, 0};
  const auto g = compute_individual_gradients(params, x, y, LossWeighting::per_ball);
  const auto fd = fd_params(
      params, [&](const ModelParams& q) { return compute_individual_gradients(q, x, y, LossWeighting::per_ball).loss; },
      1e-5);
  const auto analytic = flatten(g.grads);
  for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_LE(rel_err(analytic[i], fd[i]), 1e-4) << i;
}

TEST(Gradients, SingletonPartitionEqualsIndividual) {
  const auto params = ModelParams::initialize({4, 8, 6, 3}, 10);
  const Matrix x = random_matrix(6, 4, 11);
  const std::vector<ClassId> y{0, 1, 2, 0, 1, 2};
  Partition p;
  p.source_size = 6;
  for (std::size_t i = 0; i < 6; ++i) p.balls.push_back({{i}, {}, y[i], 1.0});
  const auto a = compute_gradients(params, x, p, y, BackwardMode::mean_scaled, LossWeighting::per_ball);
  const auto b = compute_individual_gradients(params, x, y, LossWeighting::per_ball);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grads, b.grads);
}

TEST(Optimizer, ZeroRateLeavesParameters) {
  auto params = ModelParams::initialize({3, 4, 2, 2}, 1);
  const auto before = params;
  SgdOptimizer opt(params, 0.9, true, 1e-2);
  const auto grads = ModelParams::initialize({3, 4, 2, 2}, 2);
  opt.apply(params, grads, 0.0);
  EXPECT_EQ(params, before);
}

TEST(Optimizer, WeightDecayShrinksWeightsOnly) {
  auto params = ModelParams::initialize({3, 4, 2, 2}, 1);
  for (auto& b : params.hidden.bias) b = 0.5;
  const auto before = params;
  SgdOptimizer opt(params, 0.0, false, 0.1);
  opt.apply(params, ModelParams::zeros(params.shape()), 0.5);
  const auto pb = std::as_const(params).blocks();
  const auto bb = before.blocks();
  for (std::size_t b = 0; b < pb.size(); ++b) {
    for (std::size_t i = 0; i < pb[b].size(); ++i) {
      if (ModelParams::is_weight_block(b)) {
        EXPECT_NEAR(pb[b][i], bb[b][i] * (1.0 - 0.5 * 0.1), 1e-15);
      } else {
        EXPECT_EQ(pb[b][i], bb[b][i]);
      }
    }
  }
}

TEST(Optimizer, NesterovLookahead) {
  auto params = ModelParams::zeros({1, 1, 1, 1});
  SgdOptimizer opt(params, 0.5, true, 0.0);
  auto grads = ModelParams::zeros(params.shape());
  grads.classifier.bias[0] = 1.0;
  opt.apply(params, grads, 1.0);
  EXPECT_EQ(params.classifier.bias[0], -1.5);  // v = 1, step = g + mu v
  opt.apply(params, grads, 1.0);
  EXPECT_EQ(params.classifier.bias[0], -1.5 - 1.75);  // v = 1.5
}

TEST(Schedule, StepDecay) {
  LrSchedule s;
  EXPECT_DOUBLE_EQ(s.at(0, 100), 0.1);
  EXPECT_DOUBLE_EQ(s.at(49, 100), 0.1);
  EXPECT_DOUBLE_EQ(s.at(50, 100), 0.01);
  EXPECT_DOUBLE_EQ(s.at(75, 100), 0.001);
}

TEST(Sampler, EpochsArePermutations) {
  EpochSampler s(10, 3);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::unordered_set<std::size_t> seen;
    for (int i = 0; i < 10; ++i) seen.insert(s.next());
    EXPECT_EQ(seen.size(), 10u);
  }
}

TEST(Batch, ReplayedFirstAndDistinct) {
  ReplayConfig rc;
  rc.replay_fraction = 0.5;
  ReplayPool pool(rc);
  const std::vector<GranularBall> balls{{{1, 2}, {0.0}, 0, 1.0}, {{5}, {0.0}, 1, 1.0}};
  pool.admit(balls, 0);
  EpochSampler sampler(20, 1);
  TrainConfig tc;
  tc.batch_size = 8;
  const auto b = assemble_batch(pool, sampler, tc, 20);
  ASSERT_EQ(b.indices.size(), 8u);
  EXPECT_EQ(b.empirical_samples, 3u);
  EXPECT_EQ(b.empirical.size(), 2u);
  EXPECT_EQ(std::unordered_set<std::size_t>(b.indices.begin(), b.indices.end()).size(), 8u);
  tc.mode = TrainMode::individual;
  EXPECT_EQ(assemble_batch(pool, sampler, tc, 20).empirical_samples, 0u);
}

TEST(Trainer, SingletonGbcReproducesIndividualBitwise) {
  // Every label is distinct, so purity 1 forces singleton balls.
  const Dataset d = distinct_label_data(12);
  TrainConfig tc;
  tc.batch_size = 6;
  tc.steps = 20;
  tc.seed = 4;
  tc.hidden_dim = 8;
  tc.feature_dim = 4;
  SplitConfig sc;
  sc.purity_threshold = 1.0;
  ReplayConfig rc;
  rc.replay_fraction = 0.0;
  auto ind_cfg = tc, gbc_cfg = tc;
  ind_cfg.mode = TrainMode::individual;
  gbc_cfg.mode = TrainMode::gbc;
  Trainer ind(d, ind_cfg, sc, rc), gbc(d, gbc_cfg, sc, rc);
  while (!ind.finished()) {
    const auto a = ind.step(), b = gbc.step();
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.ball_count, b.ball_count);
    EXPECT_EQ(a.mean_ball_size, b.mean_ball_size);
    EXPECT_EQ(a.ball_noise, b.ball_noise);
  }
  EXPECT_EQ(ind.params(), gbc.params());
}

TEST(Trainer, LearnsSeparableBlobs) {
  SynthSpec spec;
  spec.per_class = 100;
  spec.separation = 10.0;
  spec.seed = 1;
  const Dataset train = synthesize(spec);
  spec.seed = 2;
  const Dataset test = synthesize(spec);
  TrainConfig tc;
  tc.steps = 150;
  tc.batch_size = 64;
  tc.seed = 3;
  for (auto mode : {TrainMode::individual, TrainMode::gbc}) {
    tc.mode = mode;
    Trainer t(train, tc, SplitConfig{}, ReplayConfig{});
    while (!t.finished()) t.step();
    EXPECT_GE(evaluate(t.params(), test), 0.99);
  }
}

TEST(Trainer, ConstantPredictorScoresChance) {
  SynthSpec spec;
  spec.per_class = 20;
  const Dataset test = synthesize(spec);
  EXPECT_DOUBLE_EQ(evaluate(ModelParams::zeros({spec.dim, 4, 4, spec.classes}), test), 0.1);
}

TEST(Trainer, DivergenceIsANumericalError) {
  SynthSpec spec;
  spec.per_class = 20;
  const Dataset d = synthesize(spec);
  TrainConfig tc;
  tc.lr.initial = 1e300;
  tc.batch_size = 32;
  tc.steps = 5;
  Trainer t(d, tc, SplitConfig{}, ReplayConfig{});
  EXPECT_THROW(
      {
        while (!t.finished()) t.step();
      },
      NumericalError);
}

TEST(Trainer, ConfigErrors) {
  const Dataset d = distinct_label_data(4);
  TrainConfig tc;
  tc.batch_size = 5;
  EXPECT_THROW(Trainer(d, tc, SplitConfig{}, ReplayConfig{}), DomainError);
  tc.batch_size = 2;
  tc.momentum = 1.0;
  EXPECT_THROW(Trainer(d, tc, SplitConfig{}, ReplayConfig{}), DomainError);
}
