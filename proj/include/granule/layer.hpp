#pragma once

#include <vector>

#include "granule/ballgen.hpp"
#include "granule/core.hpp"

namespace granule {

/// How ball-center gradients reach member samples.
enum class BackwardMode {
  /// Every member receives the ball gradient unchanged.
  replicate,
  /// Every member receives the ball gradient divided by the ball size; the
  /// exact adjoint of taking the mean.
  mean_scaled,
};

/// What backward needs to route gradients: the frozen ball structure.
struct GbcForwardRecord {
  Partition partition;
  std::size_t input_dim = 0;
  BackwardMode backward_mode = BackwardMode::mean_scaled;
};

struct GbcForwardResult {
  Matrix ball_centers;  // [N_gb, d0]
  std::vector<ClassId> ball_labels;
  GbcForwardRecord record;
};

/// Partition a batch into granular-balls and emit one center row per ball.
GbcForwardResult gbc_forward(const Matrix& batch_features, std::span<const ClassId> batch_labels,
                             const SplitConfig& cfg, BackwardMode mode = BackwardMode::mean_scaled);

/// Centers of an existing partition over `batch_features`, row i for ball i.
Matrix ball_centers(const Matrix& batch_features, const Partition& partition);

/// Route per-ball gradients back to the N_b batch rows.
Matrix gbc_backward(const Matrix& grad_ball_centers, const GbcForwardRecord& record);

/// Inference path: every sample is its own ball.
Matrix inference_forward(const Matrix& batch_features);

}  // namespace granule
