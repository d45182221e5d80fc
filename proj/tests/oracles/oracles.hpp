#pragma once

// Independent reference computations used only by the tests.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "granule/matrix.hpp"

namespace oracle {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

/// SSE of one cluster around its own mean.
inline double cluster_sse(const granule::Matrix& pts, const std::vector<std::size_t>& rows) {
  if (rows.empty()) return 0.0;
  std::vector<double> mean(pts.cols(), 0.0);
  for (auto r : rows)
    for (std::size_t j = 0; j < pts.cols(); ++j) mean[j] += pts(r, j);
  for (double& m : mean) m /= static_cast<double>(rows.size());
  double s = 0.0;
  for (auto r : rows) s += sq_dist(pts.row(r), mean);
  return s;
}

/// Minimum 2-means SSE over every bipartition into two non-empty sets.
inline double best_bipartition_sse(const granule::Matrix& pts) {
  const std::size_t n = pts.rows();
  double best = std::numeric_limits<double>::infinity();
  // Point 0 always sits in cluster A, so each split is visited once.
  for (std::size_t mask = 0; mask < (std::size_t{1} << (n - 1)); ++mask) {
    std::vector<std::size_t> a{0}, b;
    for (std::size_t i = 1; i < n; ++i) ((mask >> (i - 1)) & 1 ? b : a).push_back(i);
    if (b.empty()) continue;
    best = std::min(best, cluster_sse(pts, a) + cluster_sse(pts, b));
  }
  return best;
}

/// Central difference of f at x in every coordinate.
inline std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                              std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Majority share by plain counting, ties to the smallest label.
inline std::pair<unsigned, double> majority(std::span<const unsigned> labels) {
  std::map<unsigned, std::size_t> count;
  for (auto l : labels) ++count[l];
  unsigned best = 0;
  std::size_t hits = 0;
  for (auto [l, c] : count)
    if (c > hits) best = l, hits = c;
  return {best, static_cast<double>(hits) / static_cast<double>(labels.size())};
}

/// Index of the nearest mean to x.
inline std::size_t nearest_mean(std::span<const double> x, const std::vector<std::vector<double>>& means) {
  std::size_t best = 0;
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < means.size(); ++k) {
    const double dk = sq_dist(x, means[k]);
    if (dk < d) d = dk, best = k;
  }
  return best;
}

}  // namespace oracle
