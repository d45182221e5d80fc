#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "granule/core.hpp"

namespace granule {

/// Affine map y = x W^T + b with W stored [out, in].
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct ModelShape {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 64;
  std::size_t feature_dim = 16;
  std::size_t classes = 0;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Feature extractor f(x) = tanh(W2 tanh(W1 x + b1) + b2) followed by a
/// linear softmax classifier g(f) = W3 f + b3.
struct ModelParams {
  DenseLayer hidden;
  DenseLayer feature;
  DenseLayer classifier;

  /// Scaled-normal weights (std 1/sqrt(fan_in)), zero biases.
  static ModelParams initialize(const ModelShape& shape, std::uint64_t seed);
  static ModelParams zeros(const ModelShape& shape);

  ModelShape shape() const;
  std::size_t parameter_count() const;

  /// Every parameter block in a fixed order: W1, b1, W2, b2, W3, b3.
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
  /// True for weight blocks (the ones weight decay applies to).
  static bool is_weight_block(std::size_t block) { return block % 2 == 0; }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Activations kept from the extractor forward pass.
struct ExtractorCache {
  Matrix input;
  Matrix hidden;    // tanh(W1 x + b1)
  Matrix features;  // tanh(W2 h + b2)
};

ExtractorCache extract_features(const ModelParams& params, const Matrix& inputs);
Matrix classify(const ModelParams& params, const Matrix& features);

/// Adds classifier gradients to `grads`; returns d loss / d features.
Matrix classifier_backward(const ModelParams& params, const Matrix& features, const Matrix& grad_logits,
                           ModelParams& grads);
/// Adds extractor gradients to `grads`.
void extractor_backward(const ModelParams& params, const ExtractorCache& cache, const Matrix& grad_features,
                        ModelParams& grads);

/// Row-wise argmax of the logits; ties go to the smallest class id.
std::vector<ClassId> predict(const ModelParams& params, const Matrix& inputs);

// Checkpoint layout, all little-endian:
//   "GBCK" | u32 version = 1 | u32 input_dim | u32 hidden_dim | u32 feature_dim | u32 classes
//   then W1, b1, W2, b2, W3, b3 as row-major f64.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> checkpoint_bytes(const ModelParams& params);
ModelParams params_from_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace granule
