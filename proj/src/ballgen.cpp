#include "granule/ballgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>

namespace granule {
namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    acc += d * d;
  }
  return acc;
}

bool rows_coincide(const Matrix& points, std::span<const std::size_t> rows) {
  const auto first = points.row(rows.front());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto r = points.row(rows[i]);
    if (!std::equal(first.begin(), first.end(), r.begin())) return false;
  }
  return true;
}

void update_centroids(const Matrix& points, std::span<const std::size_t> rows,
                      const std::vector<std::uint8_t>& assignment, std::array<FeatureVector, 2>& centroids) {
  const std::size_t dim = points.cols();
  std::array<std::size_t, 2> counts{0, 0};
  for (auto& c : centroids) c.assign(dim, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& c = centroids[assignment[i]];
    const auto p = points.row(rows[i]);
    for (std::size_t j = 0; j < dim; ++j) c[j] += p[j];
    ++counts[assignment[i]];
  }
  for (int k = 0; k < 2; ++k) {
    const double inv = 1.0 / static_cast<double>(counts[k]);
    for (double& x : centroids[k]) x *= inv;
  }
}

double total_sse(const Matrix& points, std::span<const std::size_t> rows,
                 const std::vector<std::uint8_t>& assignment, const std::array<FeatureVector, 2>& centroids) {
  double sse = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sse += squared_distance(points.row(rows[i]), centroids[assignment[i]]);
  }
  return sse;
}

TwoMeansResult half_split(const Matrix& points, std::span<const std::size_t> rows) {
  TwoMeansResult out;
  out.assignment.assign(rows.size(), 0);
  for (std::size_t i = rows.size() / 2; i < rows.size(); ++i) out.assignment[i] = 1;
  update_centroids(points, rows, out.assignment, out.centroids);
  out.sse = total_sse(points, rows, out.assignment, out.centroids);
  return out;
}

FeatureVector row_vector(const Matrix& points, std::size_t r) {
  const auto src = points.row(r);
  return {src.begin(), src.end()};
}

void check_points(const Matrix& points, std::span<const std::size_t> rows) {
  if (rows.size() < 2) throw DomainError("two_means needs at least 2 points");
  if (points.cols() == 0) throw DomainError("two_means needs dimension >= 1");
  for (std::size_t r : rows) {
    if (r >= points.rows()) throw DomainError("two_means row index out of range");
  }
}

struct Candidate {
  std::vector<std::size_t> members;
  std::uint64_t seed = 0;
};

/// Result of looking at one dequeued ball: a finalized ball or two children.
struct Outcome {
  bool finalized = false;
  GranularBall ball;
  std::array<Candidate, 2> children;
};

Outcome process(const Matrix& features, std::span<const ClassId> labels, const SplitConfig& cfg,
                Candidate& cand) {
  std::vector<ClassId> member_labels;
  member_labels.reserve(cand.members.size());
  for (std::size_t m : cand.members) member_labels.push_back(labels[m]);
  const PurityResult pr = purity(member_labels);

  Outcome out;
  const std::size_t split_above = std::max<std::size_t>(1, cfg.min_ball_size);
  if (!(pr.purity < cfg.purity_threshold && cand.members.size() > split_above)) {
    out.finalized = true;
    out.ball.center = center_of_rows(features, cand.members);
    out.ball.label = pr.majority_label;
    out.ball.purity = pr.purity;
    out.ball.members = std::move(cand.members);
    return out;
  }

  auto& left = out.children[0].members;
  auto& right = out.children[1].members;
  if (rows_coincide(features, cand.members)) {
    // 2-means cannot separate identical points; peel off the majority label.
    for (std::size_t i = 0; i < cand.members.size(); ++i) {
      (member_labels[i] == pr.majority_label ? left : right).push_back(cand.members[i]);
    }
  } else {
    Rng rng(cand.seed);
    const TwoMeansResult tm = two_means(features, cand.members, cfg, rng);
    for (std::size_t i = 0; i < cand.members.size(); ++i) {
      (tm.assignment[i] == 0 ? left : right).push_back(cand.members[i]);
    }
  }
  out.children[0].seed = derive_seed(cand.seed, std::uint64_t{0});
  out.children[1].seed = derive_seed(cand.seed, std::uint64_t{1});
  return out;
}

void check_generate_inputs(const Matrix& features, std::span<const ClassId> labels, const SplitConfig& cfg) {
  cfg.validate();
  if (features.rows() == 0) throw DomainError("generate needs at least one sample");
  if (features.cols() == 0) throw DomainError("feature dimension must be >= 1");
  if (labels.size() != features.rows()) throw DomainError("labels are not aligned with feature rows");
  if (!all_finite(features.values())) throw DomainError("features contain NaN or Inf");
}

Candidate root_candidate(std::size_t n, std::uint64_t seed) {
  Candidate root;
  root.members.resize(n);
  std::iota(root.members.begin(), root.members.end(), std::size_t{0});
  root.seed = splitmix64(seed);
  return root;
}

Partition finish(std::vector<GranularBall> balls, std::size_t n) {
  std::sort(balls.begin(), balls.end(),
            [](const GranularBall& a, const GranularBall& b) { return a.members.front() < b.members.front(); });
  return Partition{std::move(balls), n};
}

}  // namespace

void SplitConfig::validate() const {
  if (!(purity_threshold > 0.5 && purity_threshold <= 1.0)) {
    throw DomainError("purity threshold must lie in (0.5, 1]");
  }
  if (max_lloyd_iters == 0) throw DomainError("max_lloyd_iters must be positive");
  if (restarts == 0) throw DomainError("restarts must be positive");
  if (min_ball_size == 0) throw DomainError("min_ball_size must be positive");
}

LloydRun lloyd_two_means(const Matrix& points, std::span<const std::size_t> rows, FeatureVector start0,
                         FeatureVector start1, std::size_t max_iters) {
  check_points(points, rows);
  if (start0.size() != points.cols() || start1.size() != points.cols()) {
    throw DomainError("starting centroids have the wrong dimension");
  }
  LloydRun run;
  auto& res = run.result;
  res.centroids = {std::move(start0), std::move(start1)};
  std::vector<std::uint8_t> previous;
  for (std::size_t iter = 0; iter < std::max<std::size_t>(1, max_iters); ++iter) {
    res.assignment.assign(rows.size(), 0);
    std::array<std::size_t, 2> counts{0, 0};
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto p = points.row(rows[i]);
      const double d0 = squared_distance(p, res.centroids[0]);
      const double d1 = squared_distance(p, res.centroids[1]);
      res.assignment[i] = d1 < d0 ? 1 : 0;
      ++counts[res.assignment[i]];
    }
    for (std::uint8_t empty = 0; empty < 2; ++empty) {
      if (counts[empty] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const double d = squared_distance(points.row(rows[i]), res.centroids[res.assignment[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --counts[res.assignment[far]];
      res.assignment[far] = empty;
      ++counts[empty];
    }
    update_centroids(points, rows, res.assignment, res.centroids);
    res.sse = total_sse(points, rows, res.assignment, res.centroids);
    run.sse_history.push_back(res.sse);
    if (res.assignment == previous) break;
    previous = res.assignment;
  }
  return run;
}

TwoMeansResult two_means(const Matrix& points, std::span<const std::size_t> rows, const SplitConfig& cfg,
                         Rng& rng) {
  check_points(points, rows);
  if (rows_coincide(points, rows)) return half_split(points, rows);

  TwoMeansResult best;
  best.sse = std::numeric_limits<double>::infinity();
  auto consider = [&](FeatureVector a, FeatureVector b) {
    LloydRun run = lloyd_two_means(points, rows, std::move(a), std::move(b), cfg.max_lloyd_iters);
    if (run.result.sse < best.sse) best = std::move(run.result);
  };

  if (cfg.seeding == Seeding::exhaustive_pairs) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = i + 1; j < rows.size(); ++j) {
        if (squared_distance(points.row(rows[i]), points.row(rows[j])) == 0.0) continue;
        consider(row_vector(points, rows[i]), row_vector(points, rows[j]));
      }
    }
    return best;
  }

  std::vector<double> weights(rows.size());
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
    const std::size_t first = pick(rng);
    const auto anchor = points.row(rows[first]);
    for (std::size_t i = 0; i < rows.size(); ++i) weights[i] = squared_distance(points.row(rows[i]), anchor);
    // At least one weight is positive because the points do not all coincide.
    std::discrete_distribution<std::size_t> weighted(weights.begin(), weights.end());
    const std::size_t second = weighted(rng);
    consider(row_vector(points, rows[first]), row_vector(points, rows[second]));
  }
  return best;
}

TwoMeansResult two_means(const Matrix& points, const SplitConfig& cfg, Rng& rng) {
  std::vector<std::size_t> rows(points.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return two_means(points, rows, cfg, rng);
}

namespace serial {

Partition generate(const Matrix& features, std::span<const ClassId> labels, const SplitConfig& cfg) {
  check_generate_inputs(features, labels, cfg);
  std::deque<Candidate> queue;
  queue.push_back(root_candidate(features.rows(), cfg.seed));
  std::vector<GranularBall> balls;
  while (!queue.empty()) {
    Candidate cand = std::move(queue.front());
    queue.pop_front();
    Outcome out = process(features, labels, cfg, cand);
    if (out.finalized) {
      balls.push_back(std::move(out.ball));
    } else {
      queue.push_back(std::move(out.children[0]));
      queue.push_back(std::move(out.children[1]));
    }
  }
  return finish(std::move(balls), features.rows());
}

}  // namespace serial

Partition generate(const Matrix& features, std::span<const ClassId> labels, const SplitConfig& cfg) {
  check_generate_inputs(features, labels, cfg);
  // Processing a whole FIFO generation at once and appending children in
  // order reproduces the serial queue exactly.
  std::vector<Candidate> level;
  level.push_back(root_candidate(features.rows(), cfg.seed));
  std::vector<GranularBall> balls;
  while (!level.empty()) {
    std::vector<Outcome> outcomes(level.size());
    const auto count = static_cast<std::int64_t>(level.size());
#pragma omp parallel for schedule(dynamic, 1) if (count > 1)
    for (std::int64_t i = 0; i < count; ++i) {
      outcomes[i] = process(features, labels, cfg, level[i]);
    }
    std::vector<Candidate> next;
    for (auto& out : outcomes) {
      if (out.finalized) {
        balls.push_back(std::move(out.ball));
      } else {
        next.push_back(std::move(out.children[0]));
        next.push_back(std::move(out.children[1]));
      }
    }
    level = std::move(next);
  }
  return finish(std::move(balls), features.rows());
}

Partition generate(std::span<const LabeledSample> samples, const SplitConfig& cfg) {
  if (samples.empty()) throw DomainError("generate needs at least one sample");
  const std::size_t dim = samples.front().features.size();
  Matrix features(samples.size(), dim);
  std::vector<ClassId> labels(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].features.size() != dim) throw DomainError("mixed feature dimensions");
    std::copy(samples[i].features.begin(), samples[i].features.end(), features.row(i).begin());
    labels[i] = samples[i].observed_label;
  }
  return generate(features, labels, cfg);
}

PartitionStats partition_stats(const Partition& partition) {
  PartitionStats stats;
  stats.ball_count = partition.balls.size();
  std::size_t total = 0;
  for (const auto& ball : partition.balls) {
    total += ball.size();
    ++stats.size_histogram[ball.size()];
    const auto bin = static_cast<std::size_t>(std::floor(ball.purity * 10.0));
    ++stats.purity_histogram[std::min<std::size_t>(bin, 9)];
  }
  stats.mean_size = stats.ball_count == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(stats.ball_count);
  return stats;
}

}  // namespace granule
