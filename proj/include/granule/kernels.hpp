#pragma once

#include "granule/matrix.hpp"

namespace granule::kernels {

// Dense products used by the trainer. Each output element is accumulated by a
// single thread in ascending index order, so the OpenMP versions are
// bit-identical to the serial references for any thread count.

/// A [n,k] times B^T, B [m,k] -> [n,m].
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// A [n,k] times B [k,m] -> [n,m].
Matrix matmul_nn(const Matrix& a, const Matrix& b);
/// A^T times B, A [n,m], B [n,k] -> [m,k].
Matrix matmul_tn(const Matrix& a, const Matrix& b);

namespace serial {
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_nn(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
}  // namespace serial

/// Number of threads OpenMP regions will use (1 without OpenMP).
int max_threads();
void set_num_threads(int n);

}  // namespace granule::kernels
