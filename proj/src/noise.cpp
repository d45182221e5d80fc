#include "granule/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "granule/rng.hpp"

namespace granule {

void SynthSpec::validate() const {
  if (classes < 2) throw DomainError("synthetic data needs at least 2 classes");
  if (per_class == 0) throw DomainError("per-class count must be positive");
  if (dim == 0) throw DomainError("dimension must be positive");
  if (!(stddev > 0.0) || !std::isfinite(stddev)) throw DomainError("stddev must be positive");
  if (!(separation >= 0.0) || !std::isfinite(separation)) throw DomainError("separation must be >= 0");
  if (placement == MeanPlacement::simplex && dim < classes) {
    throw DomainError("simplex placement needs dim >= classes");
  }
}

std::vector<FeatureVector> class_means(const SynthSpec& spec) {
  spec.validate();
  const double radius = spec.separation / std::sqrt(2.0);
  std::vector<FeatureVector> means(spec.classes, FeatureVector(spec.dim, 0.0));
  if (spec.placement == MeanPlacement::simplex) {
    for (std::size_t c = 0; c < spec.classes; ++c) means[c][c] = radius;
    return means;
  }
  Rng rng(derive_seed(spec.seed, "synth.means"));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& m : means) {
    double norm = 0.0;
    for (double& x : m) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : m) x *= radius / norm;
  }
  return means;
}

Dataset synthesize(const SynthSpec& spec) {
  const auto means = class_means(spec);
  Dataset data;
  data.classes = spec.classes;
  data.features = Matrix(spec.classes * spec.per_class, spec.dim);
  data.labels.reserve(spec.classes * spec.per_class);
  Rng rng(derive_seed(spec.seed, "synth.samples"));
  std::normal_distribution<double> noise(0.0, spec.stddev);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t i = 0; i < spec.per_class; ++i, ++row) {
      auto r = data.features.row(row);
      for (std::size_t j = 0; j < spec.dim; ++j) r[j] = means[c][j] + noise(rng);
      data.labels.push_back(static_cast<ClassId>(c));
    }
  }
  data.clean_labels.assign(data.labels.begin(), data.labels.end());
  return data;
}

void NoiseSpec::validate(std::size_t classes) const {
  if (!(rate >= 0.0 && rate < 1.0)) throw DomainError("noise rate must lie in [0, 1)");
  if (kind == NoiseKind::symmetric) {
    if (classes < 2 && rate > 0.0) throw DomainError("symmetric noise needs at least 2 classes");
    return;
  }
  if (flip_pairs.empty()) throw DomainError("asymmetric noise needs at least one flip pair");
  std::set<ClassId> used;
  for (const auto& [a, b] : flip_pairs) {
    if (a == b) throw DomainError("flip pair must name two distinct classes");
    if (a >= classes || b >= classes) throw DomainError("flip pair class out of range");
    if (!used.insert(a).second || !used.insert(b).second) {
      throw DomainError("a class may appear in at most one flip pair");
    }
  }
}

InjectResult inject(const Dataset& clean_data, const NoiseSpec& spec) {
  if (!clean_data.has_clean_labels()) throw DomainError("noise injection needs clean labels");
  spec.validate(clean_data.classes);
  InjectResult out{clean_data, 0, 0.0};
  Dataset& d = out.data;
  for (std::size_t i = 0; i < d.size(); ++i) d.labels[i] = *d.clean_labels[i];

  std::vector<std::vector<std::size_t>> by_class(d.classes);
  for (std::size_t i = 0; i < d.size(); ++i) by_class[d.labels[i]].push_back(i);

  Rng rng(derive_seed(spec.seed, "noise.inject"));
  auto pick_victims = [&](std::vector<std::size_t> members) {
    const auto count = static_cast<std::size_t>(std::floor(spec.rate * static_cast<double>(members.size())));
    std::shuffle(members.begin(), members.end(), rng);
    members.resize(count);
    std::sort(members.begin(), members.end());
    return members;
  };

  if (spec.kind == NoiseKind::symmetric) {
    std::uniform_int_distribution<ClassId> other(0, static_cast<ClassId>(d.classes - 2));
    for (std::size_t c = 0; c < d.classes; ++c) {
      for (std::size_t i : pick_victims(by_class[c])) {
        ClassId label = other(rng);
        if (label >= c) ++label;  // skip the true class
        d.labels[i] = label;
        ++out.flipped;
      }
    }
  } else {
    for (const auto& [a, b] : spec.flip_pairs) {
      for (std::size_t i : pick_victims(by_class[a])) {
        d.labels[i] = b;
        ++out.flipped;
      }
      for (std::size_t i : pick_victims(by_class[b])) {
        d.labels[i] = a;
        ++out.flipped;
      }
    }
  }
  out.realized_rate = static_cast<double>(out.flipped) / static_cast<double>(d.size());
  return out;
}

NoiseRates noise_rates(const Dataset& data, const Partition& partition) {
  if (!data.has_clean_labels()) throw DomainError("noise rates need clean labels");
  if (partition.source_size != data.size()) throw DomainError("partition does not cover this dataset");
  validate_partition(partition);
  NoiseRates r;
  std::size_t noisy = 0;
  for (std::size_t i = 0; i < data.size(); ++i) noisy += data.labels[i] != *data.clean_labels[i];

  std::size_t wrong_samples = 0;
  std::size_t wrong_balls = 0;
  std::vector<ClassId> clean;
  for (const auto& ball : partition.balls) {
    clean.clear();
    for (std::size_t m : ball.members) {
      clean.push_back(*data.clean_labels[m]);
      wrong_samples += ball.label != *data.clean_labels[m];
    }
    wrong_balls += ball.label != purity(clean).majority_label;
  }
  const auto n = static_cast<double>(data.size());
  r.sample_rate_before = static_cast<double>(noisy) / n;
  r.gb_sample_rate_after = static_cast<double>(wrong_samples) / n;
  r.gb_ball_rate_after =
      partition.balls.empty() ? 0.0 : static_cast<double>(wrong_balls) / static_cast<double>(partition.balls.size());
  return r;
}

}  // namespace granule
