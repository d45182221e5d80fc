#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "granule/ballgen.hpp"
#include "granule/core.hpp"
#include "granule/layer.hpp"
#include "granule/model.hpp"
#include "granule/replay.hpp"
#include "granule/rng.hpp"

namespace granule {

enum class TrainMode { individual, gbc };
enum class LossWeighting { per_ball, size_weighted };

/// Step decay: the rate is multiplied by `factor` once the step passes each
/// fraction of the run in `decay_fractions`.
struct LrSchedule {
  double initial = 0.1;
  std::vector<double> decay_fractions{0.5, 0.75};
  double factor = 0.1;

  double at(std::uint64_t step, std::uint64_t total_steps) const;
};

struct TrainConfig {
  LrSchedule lr;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 1e-4;
  std::size_t batch_size = 256;
  std::uint64_t steps = 1000;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::gbc;
  BackwardMode backward_mode = BackwardMode::mean_scaled;
  LossWeighting loss_weighting = LossWeighting::per_ball;
  std::size_t hidden_dim = 64;
  std::size_t feature_dim = 16;

  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  Matrix grad_logits;
};

/// Softmax cross-entropy over rows of `logits`. per_ball averages over rows;
/// size_weighted weights row i by sizes[i] / sum(sizes).
LossResult loss_and_grads(const Matrix& logits, std::span<const ClassId> labels, LossWeighting weighting,
                          std::span<const std::size_t> sizes = {});

struct GradientResult {
  double loss = 0.0;
  ModelParams grads;
};

/// Loss and parameter gradients for a fixed ball structure over the batch.
/// Row b of the classifier input is the mean extractor output of ball b;
/// the ball structure itself is not differentiated.
GradientResult compute_gradients(const ModelParams& params, const Matrix& inputs, const Partition& partition,
                                 std::span<const ClassId> ball_labels, BackwardMode mode, LossWeighting weighting);

/// Per-sample loss and gradients (every sample its own ball, no GBC layer).
GradientResult compute_individual_gradients(const ModelParams& params, const Matrix& inputs,
                                            std::span<const ClassId> labels, LossWeighting weighting);

/// SGD with (optionally Nesterov) momentum and decoupled-from-bias weight decay.
class SgdOptimizer {
 public:
  SgdOptimizer(const ModelParams& like, double momentum, bool nesterov, double weight_decay);
  void apply(ModelParams& params, const ModelParams& grads, double lr);

 private:
  ModelParams velocity_;
  double momentum_;
  bool nesterov_;
  double weight_decay_;
};

/// Dataset rows of one step: replayed samples first, then fresh draws.
struct Batch {
  std::vector<std::size_t> indices;
  std::vector<EmpiricalBall> empirical;  // members are dataset indices within `indices`
  std::size_t empirical_samples = 0;     // leading entries of `indices` owned by `empirical`
};

struct StepMetrics {
  std::uint64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::size_t batch_size = 0;
  std::size_t ball_count = 0;
  std::size_t empirical_balls = 0;
  std::size_t admitted = 0;
  double mean_ball_size = 0.0;
  /// Share of batch samples whose observed label is wrong.
  std::optional<double> batch_noise;
  /// Share of batch samples whose training label (ball label) is wrong.
  std::optional<double> ball_noise;
};

/// Cycles through shuffled epochs of dataset indices.
class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed);
  std::size_t next();

 private:
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

struct StepContext {
  const Dataset& data;
  const TrainConfig& train;
  const SplitConfig& split;
  std::uint64_t step = 0;
};

/// One optimisation step on an assembled batch. In gbc mode the fresh part of
/// the batch is partitioned, high-purity balls are admitted to `pool`, and the
/// replayed balls have their pooled centers refreshed.
StepMetrics train_step(const Batch& batch, ModelParams& params, SgdOptimizer& optimizer, ReplayPool& pool,
                       const StepContext& ctx);

/// Draw replayed balls (gbc mode only) and fill the rest from `sampler`.
Batch assemble_batch(ReplayPool& pool, EpochSampler& sampler, const TrainConfig& train, std::size_t dataset_size);

/// Owns the state of one training run.
class Trainer {
 public:
  Trainer(const Dataset& train_data, TrainConfig train, SplitConfig split, ReplayConfig replay);

  StepMetrics step();
  bool finished() const { return step_ >= train_.steps; }

  const ModelParams& params() const { return params_; }
  const ReplayPool& pool() const { return pool_; }
  std::uint64_t steps_done() const { return step_; }

 private:
  const Dataset& data_;
  TrainConfig train_;
  SplitConfig split_;
  ModelParams params_;
  SgdOptimizer optimizer_;
  ReplayPool pool_;
  EpochSampler sampler_;
  std::uint64_t step_ = 0;
};

/// Share of `test` samples whose predicted class equals the clean label (the
/// observed label when no clean label is recorded).
double evaluate(const ModelParams& params, const Dataset& test);

}  // namespace granule
