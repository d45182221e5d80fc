#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "granule/core.hpp"
#include "granule/rng.hpp"

namespace granule {

/// How two_means picks starting centroids.
enum class Seeding {
  /// R restarts; first centroid uniform, second weighted by squared distance.
  kmeanspp,
  /// One Lloyd run from every pair of distinct input points.
  exhaustive_pairs,
};

struct SplitConfig {
  double purity_threshold = 0.9;
  std::size_t max_lloyd_iters = 50;
  std::size_t restarts = 4;
  std::uint64_t seed = 0;
  std::size_t min_ball_size = 1;
  Seeding seeding = Seeding::kmeanspp;

  /// Throws DomainError when a field is out of range.
  void validate() const;
};

struct TwoMeansResult {
  std::vector<std::uint8_t> assignment;  // 0 or 1 per point, input order
  std::array<FeatureVector, 2> centroids;
  double sse = 0.0;
};

/// One Lloyd descent plus the SSE observed after every assign/update round.
struct LloydRun {
  TwoMeansResult result;
  std::vector<double> sse_history;
};

/// Lloyd's algorithm on `rows` of `points` from the given starting centroids.
/// Stops at an assignment fixed point or after `max_iters` rounds. An empty
/// cluster receives the point farthest from its own centroid.
LloydRun lloyd_two_means(const Matrix& points, std::span<const std::size_t> rows,
                         FeatureVector start0, FeatureVector start1, std::size_t max_iters);

/// Best-of-restarts 2-means over `rows` of `points` (needs >= 2 rows).
/// When every point coincides, the row list is split in half.
TwoMeansResult two_means(const Matrix& points, std::span<const std::size_t> rows,
                         const SplitConfig& cfg, Rng& rng);
/// 2-means over every row of `points`.
TwoMeansResult two_means(const Matrix& points, const SplitConfig& cfg, Rng& rng);

/// Adaptive granular-ball generation.
///
/// A FIFO queue starts with one ball holding every row. A dequeued ball whose
/// purity is below the threshold and whose size exceeds max(1, min_ball_size)
/// is split in two, by 2-means on features, or by majority label versus the
/// rest when all its features coincide. Otherwise it is finalized with its
/// center, majority label and purity.
///
/// Ball members are row positions. Balls are returned ordered by their
/// smallest member. Each queued ball draws its 2-means randomness from a seed
/// derived from its parent's, so the result depends only on (input, cfg).
///
/// This version processes each queue generation in parallel with OpenMP and is
/// bit-identical to serial::generate.
Partition generate(const Matrix& features, std::span<const ClassId> labels, const SplitConfig& cfg);
Partition generate(std::span<const LabeledSample> samples, const SplitConfig& cfg);

namespace serial {
/// Single-threaded reference of generate, dequeuing one ball at a time.
Partition generate(const Matrix& features, std::span<const ClassId> labels, const SplitConfig& cfg);
}  // namespace serial

struct PartitionStats {
  std::size_t ball_count = 0;
  double mean_size = 0.0;
  std::map<std::size_t, std::size_t> size_histogram;  // size -> number of balls
  /// Ten equal-width purity bins over [0, 1]; purity 1 lands in the last bin.
  std::array<std::size_t, 10> purity_histogram{};
};

PartitionStats partition_stats(const Partition& partition);

}  // namespace granule
