#include "granule/kernels.hpp"

#include <cstdint>

#include "granule/core.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace granule::kernels {
namespace {

// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

void check_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DomainError("matmul_nt: inner dimensions differ");
}
void check_nn(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DomainError("matmul_nn: inner dimensions differ");
}
void check_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DomainError("matmul_tn: inner dimensions differ");
}

inline void nt_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const auto ar = a.row(i);
  auto orow = out.row(i);
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const auto br = b.row(j);
    double acc = 0.0;
    for (std::size_t k = 0; k < ar.size(); ++k) acc += ar[k] * br[k];
    orow[j] = acc;
  }
}

inline void nn_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const auto ar = a.row(i);
  auto orow = out.row(i);
  for (std::size_t k = 0; k < ar.size(); ++k) {
    const double s = ar[k];
    const auto br = b.row(k);
    for (std::size_t j = 0; j < orow.size(); ++j) orow[j] += s * br[j];
  }
}

// Row i of A^T B: sum over n of A(n,i) * B(n,:), n ascending.
inline void tn_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  auto orow = out.row(i);
  for (std::size_t n = 0; n < a.rows(); ++n) {
    const double s = a(n, i);
    const auto br = b.row(n);
    for (std::size_t j = 0; j < orow.size(); ++j) orow[j] += s * br[j];
  }
}

}  // namespace

namespace serial {

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_nt(a, b);
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) nt_row(a, b, out, i);
  return out;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  check_nn(a, b);
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) nn_row(a, b, out, i);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_tn(a, b);
  Matrix out(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) tn_row(a, b, out, i);
  return out;
}

}  // namespace serial

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_nt(a, b);
  Matrix out(a.rows(), b.rows());
  const auto rows = static_cast<std::int64_t>(a.rows());
  const bool parallel = a.rows() * b.rows() * a.cols() >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < rows; ++i) nt_row(a, b, out, static_cast<std::size_t>(i));
  return out;
}

Matrix matmul_nn(const Matrix& a, const Matrix& b) {
  check_nn(a, b);
  Matrix out(a.rows(), b.cols());
  const auto rows = static_cast<std::int64_t>(a.rows());
  const bool parallel = a.rows() * b.cols() * a.cols() >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < rows; ++i) nn_row(a, b, out, static_cast<std::size_t>(i));
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_tn(a, b);
  Matrix out(a.cols(), b.cols());
  const auto rows = static_cast<std::int64_t>(a.cols());
  const bool parallel = a.rows() * a.cols() * b.cols() >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < rows; ++i) tn_row(a, b, out, static_cast<std::size_t>(i));
  return out;
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace granule::kernels
