#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "granule/core.hpp"
#include "granule/rng.hpp"

namespace granule {

/// A high-purity ball kept for replay. Members are dataset-level indices.
struct EmpiricalBall {
  std::vector<std::size_t> members;
  ClassId label = 0;
  FeatureVector center;
  double purity_at_admission = 1.0;
  std::uint64_t admitted_step = 0;
};

struct ReplayConfig {
  std::size_t capacity = 512;
  double admit_purity = 1.0;
  double replay_fraction = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EmpiricalDraw {
  std::vector<EmpiricalBall> balls;
  /// Union of member indices, in draw order, first occurrence kept.
  std::vector<std::size_t> sample_indices;
};

/// Capacity-bounded experience pool with FIFO eviction.
///
/// Single owner; callers serialize mutation.
class ReplayPool {
 public:
  explicit ReplayPool(ReplayConfig cfg);

  /// Append every ball with purity >= admit_purity, evicting the oldest
  /// entries beyond capacity. `balls` members must already be dataset indices.
  std::size_t admit(std::span<const GranularBall> balls, std::uint64_t step);

  /// min(k, size()) distinct balls drawn uniformly without replacement.
  EmpiricalDraw sample_empirical(std::size_t k);

  /// Recompute stored centers of the pooled balls whose members are all
  /// present in `current_features`. Returns how many were refreshed.
  std::size_t refresh(const std::unordered_map<std::size_t, FeatureVector>& current_features);

  std::size_t size() const { return balls_.size(); }
  bool empty() const { return balls_.empty(); }
  const ReplayConfig& config() const { return cfg_; }
  const std::deque<EmpiricalBall>& balls() const { return balls_; }

  /// JSON checkpoint: config, RNG-free pool contents.
  std::string to_json() const;
  static ReplayPool from_json(const std::string& text);

 private:
  ReplayConfig cfg_;
  std::deque<EmpiricalBall> balls_;
  Rng rng_;
};

/// Same balls with centers recomputed as the mean of the members' current
/// features. Throws DomainError if a member is missing.
std::vector<EmpiricalBall> refresh_centers(std::span<const EmpiricalBall> drawn,
                                           const std::unordered_map<std::size_t, FeatureVector>& current_features);

}  // namespace granule
