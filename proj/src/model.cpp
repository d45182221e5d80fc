#include "granule/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "granule/kernels.hpp"
#include "granule/rng.hpp"

namespace granule {
namespace {

DenseLayer make_layer(std::size_t out, std::size_t in) { return {Matrix(out, in), std::vector<double>(out, 0.0)}; }

void fill_normal(DenseLayer& layer, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(layer.weight.cols())));
  for (double& w : layer.weight.values()) w = dist(rng);
}

Matrix affine(const DenseLayer& layer, const Matrix& x) {
  Matrix y = kernels::matmul_nt(x, layer.weight);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += layer.bias[j];
  }
  return y;
}

void tanh_inplace(Matrix& m) {
  for (double& v : m.values()) v = std::tanh(v);
}

// grad wrt pre-activation of tanh given output y and grad wrt output.
Matrix tanh_backward(const Matrix& y, const Matrix& grad_y) {
  Matrix g(y.rows(), y.cols());
  const auto yv = y.values();
  const auto gy = grad_y.values();
  auto gv = g.values();
  for (std::size_t i = 0; i < gv.size(); ++i) gv[i] = gy[i] * (1.0 - yv[i] * yv[i]);
  return g;
}

void accumulate_layer_grads(const Matrix& grad_out, const Matrix& input, DenseLayer& grads) {
  const Matrix dw = kernels::matmul_tn(grad_out, input);
  auto gw = grads.weight.values();
  const auto dv = dw.values();
  for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += dv[i];
  for (std::size_t n = 0; n < grad_out.rows(); ++n) {
    const auto r = grad_out.row(n);
    for (std::size_t j = 0; j < r.size(); ++j) grads.bias[j] += r[j];
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DomainError("checkpoint is truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ModelParams ModelParams::zeros(const ModelShape& shape) {
  if (shape.input_dim == 0 || shape.hidden_dim == 0 || shape.feature_dim == 0 || shape.classes == 0) {
    throw DomainError("model dimensions must be positive");
  }
  return {make_layer(shape.hidden_dim, shape.input_dim), make_layer(shape.feature_dim, shape.hidden_dim),
          make_layer(shape.classes, shape.feature_dim)};
}

ModelParams ModelParams::initialize(const ModelShape& shape, std::uint64_t seed) {
  ModelParams p = zeros(shape);
  Rng rng(seed);
  fill_normal(p.hidden, rng);
  fill_normal(p.feature, rng);
  fill_normal(p.classifier, rng);
  return p;
}

ModelShape ModelParams::shape() const {
  return {hidden.weight.cols(), hidden.weight.rows(), feature.weight.rows(), classifier.weight.rows()};
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks()) n += b.size();
  return n;
}

std::vector<std::span<double>> ModelParams::blocks() {
  return {hidden.weight.values(), hidden.bias, feature.weight.values(), feature.bias, classifier.weight.values(),
          classifier.bias};
}

std::vector<std::span<const double>> ModelParams::blocks() const {
  return {hidden.weight.values(), hidden.bias, feature.weight.values(), feature.bias, classifier.weight.values(),
          classifier.bias};
}

ExtractorCache extract_features(const ModelParams& params, const Matrix& inputs) {
  if (inputs.cols() != params.hidden.weight.cols()) throw DomainError("input dimension does not match the model");
  ExtractorCache cache;
  cache.input = inputs;
  cache.hidden = affine(params.hidden, inputs);
  tanh_inplace(cache.hidden);
  cache.features = affine(params.feature, cache.hidden);
  tanh_inplace(cache.features);
  return cache;
}

Matrix classify(const ModelParams& params, const Matrix& features) {
  if (features.cols() != params.classifier.weight.cols()) {
    throw DomainError("feature dimension does not match the classifier");
  }
  return affine(params.classifier, features);
}

Matrix classifier_backward(const ModelParams& params, const Matrix& features, const Matrix& grad_logits,
                           ModelParams& grads) {
  accumulate_layer_grads(grad_logits, features, grads.classifier);
  return kernels::matmul_nn(grad_logits, params.classifier.weight);
}

void extractor_backward(const ModelParams& params, const ExtractorCache& cache, const Matrix& grad_features,
                        ModelParams& grads) {
  const Matrix g_feat_pre = tanh_backward(cache.features, grad_features);
  accumulate_layer_grads(g_feat_pre, cache.hidden, grads.feature);
  const Matrix g_hidden = kernels::matmul_nn(g_feat_pre, params.feature.weight);
  const Matrix g_hidden_pre = tanh_backward(cache.hidden, g_hidden);
  accumulate_layer_grads(g_hidden_pre, cache.input, grads.hidden);
}

std::vector<ClassId> predict(const ModelParams& params, const Matrix& inputs) {
  const Matrix logits = classify(params, extract_features(params, inputs).features);
  std::vector<ClassId> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto r = logits.row(i);
    std::size_t best = 0;
    for (std::size_t c = 1; c < r.size(); ++c) {
      if (r[c] > r[best]) best = c;
    }
    out[i] = static_cast<ClassId>(best);
  }
  return out;
}

std::vector<std::uint8_t> checkpoint_bytes(const ModelParams& params) {
  std::vector<std::uint8_t> out{'G', 'B', 'C', 'K'};
  put_u32(out, kCheckpointVersion);
  const ModelShape s = params.shape();
  for (std::size_t d : {s.input_dim, s.hidden_dim, s.feature_dim, s.classes}) put_u32(out, static_cast<std::uint32_t>(d));
  for (const auto& block : params.blocks()) {
    for (double v : block) put_f64(out, v);
  }
  return out;
}

ModelParams params_from_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "GBCK", 4) != 0) throw DomainError("not a GBCK checkpoint");
  Reader in(bytes.subspan(4));
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) throw DomainError("unsupported checkpoint version " + std::to_string(version));
  ModelShape shape;
  shape.input_dim = in.u32();
  shape.hidden_dim = in.u32();
  shape.feature_dim = in.u32();
  shape.classes = in.u32();
  ModelParams p = ModelParams::zeros(shape);
  for (auto block : p.blocks()) {
    for (double& v : block) v = in.f64();
  }
  if (!in.done()) throw DomainError("checkpoint has trailing bytes");
  return p;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  const auto bytes = checkpoint_bytes(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot read checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return params_from_checkpoint(bytes);
}

}  // namespace granule
