#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "granule/layer.hpp"
#include "oracles/oracles.hpp"

using namespace granule;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Matrix m(r, c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& v : m.values()) v = g(rng);
  return m;
}

Partition fixed_partition() {
  Partition p;
  p.source_size = 6;
  p.balls.push_back({{0, 2, 5}, {}, 0, 1.0});
  p.balls.push_back({{1, 4}, {}, 1, 1.0});
  p.balls.push_back({{3}, {}, 2, 1.0});
  return p;
}

}  // namespace

TEST(GbcForward, CentersAndLabels) {
  const Matrix f(4, 1, std::vector<double>{0.0, 1.0, 10.0, 12.0});
  const std::vector<ClassId> labels{0, 0, 1, 1};
  const auto out = gbc_forward(f, labels, SplitConfig{});
  ASSERT_EQ(out.ball_centers.rows(), 2u);
  EXPECT_EQ(out.ball_centers(0, 0), 0.5);
  EXPECT_EQ(out.ball_centers(1, 0), 11.0);
  EXPECT_EQ(out.ball_labels, (std::vector<ClassId>{0, 1}));
  EXPECT_EQ(out.record.input_dim, 1u);
  EXPECT_EQ(out.record.partition.source_size, 4u);
}

TEST(GbcForward, Errors) {
  EXPECT_THROW(gbc_forward(Matrix(0, 3), std::vector<ClassId>{}, SplitConfig{}), DomainError);
  EXPECT_THROW(gbc_forward(Matrix(2, 1), std::vector<ClassId>{0}, SplitConfig{}), DomainError);
}

TEST(GbcBackward, BallOfThree) {
  Partition p;
  p.source_size = 3;
  p.balls.push_back({{0, 1, 2}, {}, 0, 1.0});
  const Matrix g(1, 2, std::vector<double>{3.0, 3.0});
  const Matrix ones(3, 2, 1.0), threes(3, 2, 3.0);
  EXPECT_EQ(gbc_backward(g, {p, 2, BackwardMode::mean_scaled}), ones);
  EXPECT_EQ(gbc_backward(g, {p, 2, BackwardMode::replicate}), threes);
}

TEST(GbcBackward, ShapeMismatchThrows) {
  const GbcForwardRecord rec{fixed_partition(), 2, BackwardMode::mean_scaled};
  EXPECT_THROW(gbc_backward(Matrix(2, 2), rec), DomainError);
  EXPECT_THROW(gbc_backward(Matrix(3, 3), rec), DomainError);
}

TEST(GbcBackward, MeanScaledMatchesFiniteDifferences) {
  const Partition p = fixed_partition();
  const Matrix x = random_matrix(6, 3, 1);
  const Matrix w = random_matrix(3, 3, 2);
  // L(X) = sum_b <w_b, center_b(X)>, whose gradient is the backward of w.
  auto loss = [&](std::span<const double> flat) {
    const Matrix xm(6, 3, std::vector<double>(flat.begin(), flat.end()));
    const Matrix c = ball_centers(xm, p);
    double s = 0.0;
    for (std::size_t i = 0; i < c.values().size(); ++i) s += c.values()[i] * w.values()[i];
    return s;
  };
  const auto fd = oracle::central_difference(loss, std::vector<double>(x.values().begin(), x.values().end()), 1e-6);
  const Matrix analytic = gbc_backward(w, {p, 3, BackwardMode::mean_scaled});
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double a = analytic.values()[i];
    EXPECT_LE(std::abs(a - fd[i]) / std::max({1.0, std::abs(a), std::abs(fd[i])}), 1e-5) << i;
  }
}

TEST(GbcBackward, ReplicateIsMeanScaledTimesSize) {
  const Partition p = fixed_partition();
  const Matrix w = random_matrix(3, 4, 5);
  const Matrix rep = gbc_backward(w, {p, 4, BackwardMode::replicate});
  const Matrix mean = gbc_backward(w, {p, 4, BackwardMode::mean_scaled});
  for (const auto& ball : p.balls) {
    const double k = static_cast<double>(ball.size());
    for (auto m : ball.members) {
      for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_EQ(mean(m, j), rep(m, j) / k);
        const double ulp = std::nextafter(std::abs(rep(m, j)), INFINITY) - std::abs(rep(m, j));
        EXPECT_LE(std::abs(mean(m, j) * k - rep(m, j)), ulp);
      }
    }
  }
}

TEST(GbcBackward, SingletonsPassThrough) {
  Partition p;
  p.source_size = 3;
  for (std::size_t i = 0; i < 3; ++i) p.balls.push_back({{i}, {}, 0, 1.0});
  const Matrix w = random_matrix(3, 2, 8);
  EXPECT_EQ(gbc_backward(w, {p, 2, BackwardMode::mean_scaled}), w);
  EXPECT_EQ(gbc_backward(w, {p, 2, BackwardMode::replicate}), w);
  const Matrix x = random_matrix(3, 2, 9);
  EXPECT_EQ(ball_centers(x, p), x);
}

TEST(Inference, Identity) {
  const Matrix x = random_matrix(5, 3, 4);
  EXPECT_EQ(inference_forward(x), x);
  EXPECT_THROW(inference_forward(Matrix(0, 3)), DomainError);
}
