#include "granule/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>

namespace granule {
namespace {

std::vector<std::size_t> ball_sizes(const Partition& p) {
  std::vector<std::size_t> sizes;
  sizes.reserve(p.balls.size());
  for (const auto& b : p.balls) sizes.push_back(b.size());
  return sizes;
}

}  // namespace

double LrSchedule::at(std::uint64_t step, std::uint64_t total_steps) const {
  double lr = initial;
  for (double f : decay_fractions) {
    if (static_cast<double>(step) >= f * static_cast<double>(total_steps)) lr *= factor;
  }
  return lr;
}

void TrainConfig::validate() const {
  if (!(lr.initial >= 0.0) || !std::isfinite(lr.initial)) throw DomainError("learning rate must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw DomainError("weight decay must be >= 0");
  if (batch_size == 0) throw DomainError("batch size must be positive");
  if (mode == TrainMode::gbc && batch_size < 2) throw DomainError("gbc mode needs batch size >= 2");
  if (hidden_dim == 0 || feature_dim == 0) throw DomainError("layer widths must be positive");
}

LossResult loss_and_grads(const Matrix& logits, std::span<const ClassId> labels, LossWeighting weighting,
                          std::span<const std::size_t> sizes) {
  const std::size_t rows = logits.rows();
  if (rows == 0) throw DomainError("no logits");
  if (labels.size() != rows) throw DomainError("labels are not aligned with logit rows");
  if (!sizes.empty() && sizes.size() != rows) throw DomainError("ball sizes are not aligned with logit rows");
  const std::size_t classes = logits.cols();

  std::vector<double> weights(rows);
  if (weighting == LossWeighting::per_ball) {
    std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(rows));
  } else {
    double total = 0.0;
    for (std::size_t i = 0; i < rows; ++i) total += sizes.empty() ? 1.0 : static_cast<double>(sizes[i]);
    for (std::size_t i = 0; i < rows; ++i) {
      weights[i] = (sizes.empty() ? 1.0 : static_cast<double>(sizes[i])) / total;
    }
  }

  LossResult out;
  out.grad_logits = Matrix(rows, classes);
  std::vector<double> probs(classes);
  for (std::size_t i = 0; i < rows; ++i) {
    if (labels[i] >= classes) throw DomainError("label " + std::to_string(labels[i]) + " >= class count");
    const auto z = logits.row(i);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[c] = std::exp(z[c] - zmax);
      sum += probs[c];
    }
    const double lse = zmax + std::log(sum);
    out.loss += weights[i] * (lse - z[labels[i]]);
    auto g = out.grad_logits.row(i);
    for (std::size_t c = 0; c < classes; ++c) g[c] = weights[i] * (probs[c] / sum);
    g[labels[i]] -= weights[i];
  }
  return out;
}

GradientResult compute_gradients(const ModelParams& params, const Matrix& inputs, const Partition& partition,
                                 std::span<const ClassId> ball_labels, BackwardMode mode, LossWeighting weighting) {
  if (partition.source_size != inputs.rows()) throw DomainError("partition does not address this batch");
  if (ball_labels.size() != partition.balls.size()) throw DomainError("one label per ball is required");
  const ExtractorCache cache = extract_features(params, inputs);
  const Matrix centers = ball_centers(cache.features, partition);
  const Matrix logits = classify(params, centers);
  const auto sizes = ball_sizes(partition);
  LossResult loss = loss_and_grads(logits, ball_labels, weighting, sizes);

  GradientResult out{loss.loss, ModelParams::zeros(params.shape())};
  const Matrix grad_centers = classifier_backward(params, centers, loss.grad_logits, out.grads);
  const GbcForwardRecord record{partition, cache.features.cols(), mode};
  const Matrix grad_features = gbc_backward(grad_centers, record);
  extractor_backward(params, cache, grad_features, out.grads);
  return out;
}

GradientResult compute_individual_gradients(const ModelParams& params, const Matrix& inputs,
                                            std::span<const ClassId> labels, LossWeighting weighting) {
  const ExtractorCache cache = extract_features(params, inputs);
  const Matrix logits = classify(params, cache.features);
  LossResult loss = loss_and_grads(logits, labels, weighting);
  GradientResult out{loss.loss, ModelParams::zeros(params.shape())};
  const Matrix grad_features = classifier_backward(params, cache.features, loss.grad_logits, out.grads);
  extractor_backward(params, cache, grad_features, out.grads);
  return out;
}

SgdOptimizer::SgdOptimizer(const ModelParams& like, double momentum, bool nesterov, double weight_decay)
    : velocity_(ModelParams::zeros(like.shape())),
      momentum_(momentum),
      nesterov_(nesterov),
      weight_decay_(weight_decay) {}

void SgdOptimizer::apply(ModelParams& params, const ModelParams& grads, double lr) {
  auto pb = params.blocks();
  const auto gb = grads.blocks();
  auto vb = velocity_.blocks();
  for (std::size_t b = 0; b < pb.size(); ++b) {
    const double decay = ModelParams::is_weight_block(b) ? weight_decay_ : 0.0;
    for (std::size_t i = 0; i < pb[b].size(); ++i) {
      const double g = gb[b][i] + decay * pb[b][i];
      vb[b][i] = momentum_ * vb[b][i] + g;
      const double update = nesterov_ ? g + momentum_ * vb[b][i] : vb[b][i];
      pb[b][i] -= lr * update;
    }
  }
}

EpochSampler::EpochSampler(std::size_t n, std::uint64_t seed) : order_(n), cursor_(n), rng_(seed) {
  if (n == 0) throw DomainError("cannot sample from an empty dataset");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::size_t EpochSampler::next() {
  if (cursor_ == order_.size()) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }
  return order_[cursor_++];
}

Batch assemble_batch(ReplayPool& pool, EpochSampler& sampler, const TrainConfig& train, std::size_t dataset_size) {
  if (train.batch_size > dataset_size) throw DomainError("batch size exceeds dataset size");
  Batch batch;
  std::unordered_set<std::size_t> used;
  const auto target = static_cast<std::size_t>(std::floor(pool.config().replay_fraction *
                                                          static_cast<double>(train.batch_size)));
  if (train.mode == TrainMode::gbc && target > 0 && !pool.empty()) {
    double mean_size = 0.0;
    for (const auto& b : pool.balls()) mean_size += static_cast<double>(b.members.size());
    mean_size /= static_cast<double>(pool.size());
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(target) / mean_size)));
    EmpiricalDraw draw = pool.sample_empirical(k);
    for (auto& ball : draw.balls) {
      if (batch.empirical_samples + ball.members.size() > target) continue;
      // Overlapping replayed balls would break the disjoint-cover invariant.
      if (std::any_of(ball.members.begin(), ball.members.end(), [&](std::size_t m) { return used.contains(m); })) {
        continue;
      }
      for (std::size_t m : ball.members) {
        used.insert(m);
        batch.indices.push_back(m);
      }
      batch.empirical_samples += ball.members.size();
      batch.empirical.push_back(std::move(ball));
    }
  }
  while (batch.indices.size() < train.batch_size) {
    const std::size_t i = sampler.next();
    if (!used.insert(i).second) continue;
    batch.indices.push_back(i);
  }
  return batch;
}

StepMetrics train_step(const Batch& batch, ModelParams& params, SgdOptimizer& optimizer, ReplayPool& pool,
                       const StepContext& ctx) {
  const Dataset& data = ctx.data;
  const std::size_t n = batch.indices.size();
  if (n == 0) throw DomainError("empty batch");
  const Matrix inputs = data.features.gather_rows(batch.indices);
  std::vector<ClassId> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = data.labels[batch.indices[i]];

  StepMetrics m;
  m.step = ctx.step;
  m.lr = ctx.train.lr.at(ctx.step, ctx.train.steps);
  m.batch_size = n;

  GradientResult grad;
  std::vector<ClassId> sample_training_label(n);
  if (ctx.train.mode == TrainMode::individual) {
    grad = compute_individual_gradients(params, inputs, labels, ctx.train.loss_weighting);
    m.ball_count = n;
    sample_training_label = labels;
  } else {
    const ExtractorCache cache = extract_features(params, inputs);
    Partition partition;
    partition.source_size = n;
    std::vector<ClassId> ball_labels;

    std::unordered_map<std::size_t, std::size_t> position;
    for (std::size_t i = 0; i < batch.empirical_samples; ++i) position.emplace(batch.indices[i], i);
    for (const auto& eb : batch.empirical) {
      GranularBall ball;
      for (std::size_t idx : eb.members) ball.members.push_back(position.at(idx));
      std::sort(ball.members.begin(), ball.members.end());
      ball.label = eb.label;
      ball.purity = eb.purity_at_admission;
      partition.balls.push_back(std::move(ball));
      ball_labels.push_back(eb.label);
    }

    const bool replay_on = pool.config().replay_fraction > 0.0;
    if (replay_on) {
      std::unordered_map<std::size_t, FeatureVector> current;
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = cache.features.row(i);
        current.emplace(batch.indices[i], FeatureVector(r.begin(), r.end()));
      }
      pool.refresh(current);
    }

    const std::size_t offset = batch.empirical_samples;
    if (offset < n) {
      std::vector<std::size_t> fresh_rows(n - offset);
      std::iota(fresh_rows.begin(), fresh_rows.end(), offset);
      const Matrix fresh_features = cache.features.gather_rows(fresh_rows);
      SplitConfig split = ctx.split;
      split.seed = derive_seed(ctx.split.seed, ctx.step);
      Partition fresh = generate(fresh_features, std::span(labels).subspan(offset), split);

      std::vector<GranularBall> to_admit;
      for (auto& ball : fresh.balls) {
        if (replay_on && ball.purity >= pool.config().admit_purity) {
          GranularBall dataset_ball = ball;
          for (auto& mbr : dataset_ball.members) mbr = batch.indices[mbr + offset];
          std::sort(dataset_ball.members.begin(), dataset_ball.members.end());
          to_admit.push_back(std::move(dataset_ball));
        }
        for (auto& mbr : ball.members) mbr += offset;
        ball_labels.push_back(ball.label);
        partition.balls.push_back(std::move(ball));
      }
      if (replay_on) m.admitted = pool.admit(to_admit, ctx.step);
    }

    grad = compute_gradients(params, inputs, partition, ball_labels, ctx.train.backward_mode,
                             ctx.train.loss_weighting);

    m.ball_count = partition.balls.size();
    m.empirical_balls = batch.empirical.size();
    for (std::size_t b = 0; b < partition.balls.size(); ++b) {
      for (std::size_t mbr : partition.balls[b].members) sample_training_label[mbr] = ball_labels[b];
    }
  }

  if (!std::isfinite(grad.loss)) {
    throw NumericalError("non-finite loss at step " + std::to_string(ctx.step));
  }
  m.loss = grad.loss;
  m.mean_ball_size = static_cast<double>(n) / static_cast<double>(m.ball_count);

  if (data.has_clean_labels()) {
    std::size_t wrong_before = 0;
    std::size_t wrong_after = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const ClassId clean = *data.clean_labels[batch.indices[i]];
      wrong_before += labels[i] != clean;
      wrong_after += sample_training_label[i] != clean;
    }
    m.batch_noise = static_cast<double>(wrong_before) / static_cast<double>(n);
    m.ball_noise = static_cast<double>(wrong_after) / static_cast<double>(n);
  }

  optimizer.apply(params, grad.grads, m.lr);
  for (const auto& block : std::as_const(params).blocks()) {
    if (!all_finite(block)) throw NumericalError("non-finite parameters after step " + std::to_string(ctx.step));
  }
  return m;
}

Trainer::Trainer(const Dataset& train_data, TrainConfig train, SplitConfig split, ReplayConfig replay)
    : data_(train_data),
      train_(std::move(train)),
      split_(split),
      params_(ModelParams::initialize({train_data.dim(), train_.hidden_dim, train_.feature_dim, train_data.classes},
                                      derive_seed(train_.seed, "model.init"))),
      optimizer_(params_, train_.momentum, train_.nesterov, train_.weight_decay),
      pool_(replay),
      sampler_(train_data.size(), derive_seed(train_.seed, "batch.sampler")) {
  data_.validate();
  train_.validate();
  split_.validate();
  if (train_.batch_size > data_.size()) throw DomainError("batch size exceeds dataset size");
}

StepMetrics Trainer::step() {
  const Batch batch = assemble_batch(pool_, sampler_, train_, data_.size());
  const StepContext ctx{data_, train_, split_, step_};
  StepMetrics m = train_step(batch, params_, optimizer_, pool_, ctx);
  ++step_;
  return m;
}

double evaluate(const ModelParams& params, const Dataset& test) {
  if (test.size() == 0) throw DomainError("empty test set");
  const auto pred = predict(params, test.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const ClassId truth = (!test.clean_labels.empty() && test.clean_labels[i]) ? *test.clean_labels[i] : test.labels[i];
    correct += pred[i] == truth;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace granule
