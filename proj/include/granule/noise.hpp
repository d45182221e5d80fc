#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

#include "granule/core.hpp"

namespace granule {

enum class MeanPlacement {
  /// Class k sits at (separation / sqrt 2) * e_k, so every pair of means is
  /// `separation` apart. Needs dim >= classes.
  simplex,
  /// Means drawn on a sphere of radius separation / sqrt 2.
  random,
};

/// Isotropic Gaussian blobs, one per class.
struct SynthSpec {
  std::size_t classes = 10;
  std::size_t per_class = 500;
  std::size_t dim = 16;
  double separation = 6.0;
  double stddev = 1.0;
  MeanPlacement placement = MeanPlacement::simplex;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Class means implied by `spec`; independent of the sampling seed for
/// simplex placement.
std::vector<FeatureVector> class_means(const SynthSpec& spec);

/// Class-ordered samples with clean labels equal to the observed ones.
Dataset synthesize(const SynthSpec& spec);

enum class NoiseKind { symmetric, asymmetric };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double rate = 0.0;
  std::vector<std::pair<ClassId, ClassId>> flip_pairs;
  std::uint64_t seed = 0;

  void validate(std::size_t classes) const;
};

struct InjectResult {
  Dataset data;
  std::size_t flipped = 0;
  double realized_rate = 0.0;
};

/// Relabel a copy of `clean_data` starting from its clean labels.
///
/// symmetric: exactly floor(rate * n_c) samples of every class c get a
/// uniformly drawn different label. asymmetric: floor(rate * n_a) samples of
/// each class a in a flip pair move to its partner, and vice versa.
InjectResult inject(const Dataset& clean_data, const NoiseSpec& spec);

struct NoiseRates {
  double sample_rate_before = 0.0;
  /// Samples whose ball label differs from their clean label.
  double gb_sample_rate_after = 0.0;
  /// Balls whose label differs from the majority clean label of their members.
  double gb_ball_rate_after = 0.0;
};

NoiseRates noise_rates(const Dataset& data, const Partition& partition);

/// Thrown for malformed CSV input; `line` is 1-based and counts the header.
class CsvError : public DomainError {
 public:
  CsvError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// CSV layout: header "f0,...,f{d-1},label[,clean_label]", one sample per row.
// The class count is one more than the largest label seen unless given.
Dataset read_csv(std::istream& in, std::size_t classes = 0);
Dataset read_csv(const std::filesystem::path& path, std::size_t classes = 0);
void write_csv(const Dataset& data, std::ostream& out);
void write_csv(const Dataset& data, const std::filesystem::path& path);

}  // namespace granule
