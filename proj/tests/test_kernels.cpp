#include <random>

#include <gtest/gtest.h>

#include "granule/kernels.hpp"

using namespace granule;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Matrix m(r, c);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : m.values()) v = u(rng);
  return m;
}

class ThreadCount : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override { kernels::set_num_threads(GetParam()); }
  void TearDown() override { kernels::set_num_threads(1); }
};

}  // namespace

TEST(Kernels, SmallProducts) {
  const Matrix a(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6});
  const Matrix b(2, 3, std::vector<double>{1, 0, 1, 0, 1, 0});
  EXPECT_EQ(kernels::serial::matmul_nt(a, b), Matrix(2, 2, std::vector<double>{4, 2, 10, 5}));
  const Matrix c(3, 1, std::vector<double>{1, 1, 1});
  EXPECT_EQ(kernels::serial::matmul_nn(a, c), Matrix(2, 1, std::vector<double>{6, 15}));
  EXPECT_EQ(kernels::serial::matmul_tn(a, b), Matrix(3, 3, std::vector<double>{1, 4, 1, 2, 5, 2, 3, 6, 3}));
}

TEST_P(ThreadCount, MatchesSerialBitwise) {
  // Large enough to cross the parallel threshold.
  const Matrix a = random_matrix(700, 48, 1);
  const Matrix b = random_matrix(64, 48, 2);
  const Matrix c = random_matrix(48, 64, 3);
  const Matrix d = random_matrix(700, 64, 4);
  EXPECT_EQ(kernels::matmul_nt(a, b), kernels::serial::matmul_nt(a, b));
  EXPECT_EQ(kernels::matmul_nn(a, c), kernels::serial::matmul_nn(a, c));
  EXPECT_EQ(kernels::matmul_tn(a, d), kernels::serial::matmul_tn(a, d));
}

INSTANTIATE_TEST_SUITE_P(Threads, ThreadCount, ::testing::Values(1, 2, 4));
