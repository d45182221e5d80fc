#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "granule/matrix.hpp"

namespace granule {

/// Thrown when an operation's preconditions on its inputs are violated.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when training produces a non-finite quantity.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ClassId = std::uint32_t;
using FeatureVector = std::vector<double>;

struct LabeledSample {
  std::size_t index = 0;
  FeatureVector features;
  ClassId observed_label = 0;
  std::optional<ClassId> clean_label;
};

/// A set of samples treated as one training unit.
///
/// `members` is kept sorted ascending. `purity` is the share of members that
/// carry `label`; `center` is the arithmetic mean of member features.
struct GranularBall {
  std::vector<std::size_t> members;
  FeatureVector center;
  ClassId label = 0;
  double purity = 1.0;

  std::size_t size() const { return members.size(); }
};

/// Disjoint cover of `source_size` inputs by granular-balls.
struct Partition {
  std::vector<GranularBall> balls;
  std::size_t source_size = 0;

  std::size_t total_members() const;
};

struct PurityResult {
  ClassId majority_label = 0;
  double purity = 1.0;
};

/// Column-oriented dataset: row i of `features` is sample i.
struct Dataset {
  Matrix features;
  std::vector<ClassId> labels;  // observed, possibly noisy
  std::vector<std::optional<ClassId>> clean_labels;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  bool has_clean_labels() const;
  /// Throws DomainError on misaligned columns, labels >= classes or
  /// non-finite features.
  void validate() const;
  std::vector<LabeledSample> samples() const;
};

/// Majority label and its share. Ties go to the smallest class id.
PurityResult purity(std::span<const ClassId> labels);

/// Coordinate-wise mean of equally sized vectors.
FeatureVector center(std::span<const FeatureVector> vectors);

/// Mean of the selected rows of `features`.
FeatureVector center_of_rows(const Matrix& features, std::span<const std::size_t> rows);

/// Throws DomainError unless every ball index is < source_size and each
/// index is covered exactly once.
void validate_partition(const Partition& partition);

bool all_finite(std::span<const double> values);

}  // namespace granule
