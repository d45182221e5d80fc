#include "granule/layer.hpp"

#include <algorithm>
#include <cstdint>

namespace granule {

Matrix ball_centers(const Matrix& batch_features, const Partition& partition) {
  if (partition.source_size != batch_features.rows()) {
    throw DomainError("partition does not address this batch");
  }
  Matrix centers(partition.balls.size(), batch_features.cols());
  const auto count = static_cast<std::int64_t>(partition.balls.size());
#pragma omp parallel for schedule(static) if (count > 64)
  for (std::int64_t b = 0; b < count; ++b) {
    const FeatureVector c = center_of_rows(batch_features, partition.balls[b].members);
    std::copy(c.begin(), c.end(), centers.row(static_cast<std::size_t>(b)).begin());
  }
  return centers;
}

GbcForwardResult gbc_forward(const Matrix& batch_features, std::span<const ClassId> batch_labels,
                             const SplitConfig& cfg, BackwardMode mode) {
  if (batch_features.rows() == 0) throw DomainError("empty batch");
  if (batch_labels.size() != batch_features.rows()) {
    throw DomainError("batch labels are not aligned with feature rows");
  }
  GbcForwardResult out;
  out.record.partition = generate(batch_features, batch_labels, cfg);
  out.record.input_dim = batch_features.cols();
  out.record.backward_mode = mode;
  out.ball_centers = Matrix(out.record.partition.balls.size(), batch_features.cols());
  out.ball_labels.reserve(out.record.partition.balls.size());
  for (std::size_t b = 0; b < out.record.partition.balls.size(); ++b) {
    const auto& ball = out.record.partition.balls[b];
    std::copy(ball.center.begin(), ball.center.end(), out.ball_centers.row(b).begin());
    out.ball_labels.push_back(ball.label);
  }
  return out;
}

Matrix gbc_backward(const Matrix& grad_ball_centers, const GbcForwardRecord& record) {
  const auto& balls = record.partition.balls;
  if (grad_ball_centers.rows() != balls.size() || grad_ball_centers.cols() != record.input_dim) {
    throw DomainError("ball gradient shape does not match the forward record");
  }
  Matrix grad(record.partition.source_size, record.input_dim);
  for (std::size_t b = 0; b < balls.size(); ++b) {
    const auto g = grad_ball_centers.row(b);
    const bool scaled = record.backward_mode == BackwardMode::mean_scaled;
    const auto size = static_cast<double>(balls[b].size());
    for (std::size_t m : balls[b].members) {
      if (m >= grad.rows()) throw DomainError("ball member outside the batch");
      auto dst = grad.row(m);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scaled ? g[j] / size : g[j];
    }
  }
  return grad;
}

Matrix inference_forward(const Matrix& batch_features) {
  if (batch_features.rows() == 0) throw DomainError("empty batch");
  return batch_features;
}

}  // namespace granule
