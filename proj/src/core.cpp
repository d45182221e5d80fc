#include "granule/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace granule {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DomainError("matrix data size does not match shape");
  }
}

Matrix Matrix::gather_rows(std::span<const std::size_t> rows) const {
  Matrix out(rows.size(), cols_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= rows_) throw DomainError("row index out of range");
    std::copy_n(row(rows[i]).begin(), cols_, out.row(i).begin());
  }
  return out;
}

std::size_t Partition::total_members() const {
  std::size_t total = 0;
  for (const auto& ball : balls) total += ball.size();
  return total;
}

PurityResult purity(std::span<const ClassId> labels) {
  if (labels.empty()) throw DomainError("purity of an empty ball is undefined");
  std::map<ClassId, std::size_t> counts;
  for (ClassId label : labels) ++counts[label];
  // std::map iterates in ascending id order, so strict '>' keeps the smallest id on ties.
  PurityResult result;
  std::size_t best = 0;
  for (const auto& [label, count] : counts) {
    if (count > best) {
      best = count;
      result.majority_label = label;
    }
  }
  result.purity = static_cast<double>(best) / static_cast<double>(labels.size());
  return result;
}

FeatureVector center(std::span<const FeatureVector> vectors) {
  if (vectors.empty()) throw DomainError("center of an empty set is undefined");
  const std::size_t dim = vectors.front().size();
  if (dim == 0) throw DomainError("feature vectors must have dimension >= 1");
  FeatureVector mean(dim, 0.0);
  for (const auto& v : vectors) {
    if (v.size() != dim) throw DomainError("mixed feature dimensions");
    for (std::size_t j = 0; j < dim; ++j) mean[j] += v[j];
  }
  const double inv = 1.0 / static_cast<double>(vectors.size());
  for (double& x : mean) x *= inv;
  return mean;
}

FeatureVector center_of_rows(const Matrix& features, std::span<const std::size_t> rows) {
  if (rows.empty()) throw DomainError("center of an empty set is undefined");
  FeatureVector mean(features.cols(), 0.0);
  for (std::size_t r : rows) {
    if (r >= features.rows()) throw DomainError("row index out of range");
    const auto src = features.row(r);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += src[j];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (double& x : mean) x *= inv;
  return mean;
}

void validate_partition(const Partition& partition) {
  std::vector<bool> seen(partition.source_size, false);
  std::size_t covered = 0;
  for (const auto& ball : partition.balls) {
    if (ball.members.empty()) throw DomainError("partition contains an empty ball");
    for (std::size_t idx : ball.members) {
      if (idx >= partition.source_size) {
        throw DomainError("partition member " + std::to_string(idx) + " out of range");
      }
      if (seen[idx]) throw DomainError("partition member " + std::to_string(idx) + " covered twice");
      seen[idx] = true;
      ++covered;
    }
  }
  if (covered != partition.source_size) throw DomainError("partition does not cover every input");
}

bool Dataset::has_clean_labels() const {
  return !clean_labels.empty() &&
         std::all_of(clean_labels.begin(), clean_labels.end(), [](const auto& c) { return c.has_value(); });
}

void Dataset::validate() const {
  if (features.rows() != labels.size()) throw DomainError("dataset labels are not aligned with feature rows");
  if (!clean_labels.empty() && clean_labels.size() != labels.size()) {
    throw DomainError("dataset clean labels are not aligned with feature rows");
  }
  if (labels.empty()) throw DomainError("dataset is empty");
  if (features.cols() == 0) throw DomainError("feature dimension must be >= 1");
  if (classes == 0) throw DomainError("dataset needs at least one class");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw DomainError("label out of range at row " + std::to_string(i));
    if (!clean_labels.empty() && clean_labels[i] && *clean_labels[i] >= classes) {
      throw DomainError("clean label out of range at row " + std::to_string(i));
    }
  }
  if (!all_finite(features.values())) throw DomainError("dataset features contain NaN or Inf");
}

std::vector<LabeledSample> Dataset::samples() const {
  std::vector<LabeledSample> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    const auto r = features.row(i);
    out.push_back({i, FeatureVector(r.begin(), r.end()), labels[i],
                   clean_labels.empty() ? std::nullopt : clean_labels[i]});
  }
  return out;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace granule
