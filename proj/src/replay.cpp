#include "granule/replay.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

namespace granule {
namespace {

bool has_all_members(const EmpiricalBall& ball, const std::unordered_map<std::size_t, FeatureVector>& features) {
  return std::all_of(ball.members.begin(), ball.members.end(),
                     [&](std::size_t m) { return features.contains(m); });
}

FeatureVector mean_of_members(const EmpiricalBall& ball,
                              const std::unordered_map<std::size_t, FeatureVector>& features) {
  std::vector<FeatureVector> vectors;
  vectors.reserve(ball.members.size());
  for (std::size_t m : ball.members) {
    auto it = features.find(m);
    if (it == features.end()) throw DomainError("no current features for sample " + std::to_string(m));
    vectors.push_back(it->second);
  }
  return center(vectors);
}

}  // namespace

void ReplayConfig::validate() const {
  if (capacity == 0) throw DomainError("replay capacity must be positive");
  if (!(admit_purity > 0.5 && admit_purity <= 1.0)) throw DomainError("admit_purity must lie in (0.5, 1]");
  if (!(replay_fraction >= 0.0 && replay_fraction < 1.0)) throw DomainError("replay_fraction must lie in [0, 1)");
}

ReplayPool::ReplayPool(ReplayConfig cfg) : cfg_(cfg), rng_(derive_seed(cfg.seed, "replay.sample")) {
  cfg_.validate();
}

std::size_t ReplayPool::admit(std::span<const GranularBall> balls, std::uint64_t step) {
  std::size_t admitted = 0;
  for (const auto& ball : balls) {
    if (ball.purity < cfg_.admit_purity || ball.members.empty()) continue;
    balls_.push_back(EmpiricalBall{ball.members, ball.label, ball.center, ball.purity, step});
    ++admitted;
  }
  // Entries are appended in step order, so the front is always the oldest.
  while (balls_.size() > cfg_.capacity) balls_.pop_front();
  return admitted;
}

EmpiricalDraw ReplayPool::sample_empirical(std::size_t k) {
  EmpiricalDraw draw;
  const std::size_t take = std::min(k, balls_.size());
  if (take == 0) return draw;
  std::vector<std::size_t> order(balls_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng_)]);
  }
  std::unordered_set<std::size_t> seen;
  for (std::size_t i = 0; i < take; ++i) {
    const auto& ball = balls_[order[i]];
    draw.balls.push_back(ball);
    for (std::size_t m : ball.members) {
      if (seen.insert(m).second) draw.sample_indices.push_back(m);
    }
  }
  return draw;
}

std::size_t ReplayPool::refresh(const std::unordered_map<std::size_t, FeatureVector>& current_features) {
  std::size_t refreshed = 0;
  for (auto& ball : balls_) {
    if (!has_all_members(ball, current_features)) continue;
    ball.center = mean_of_members(ball, current_features);
    ++refreshed;
  }
  return refreshed;
}

std::vector<EmpiricalBall> refresh_centers(std::span<const EmpiricalBall> drawn,
                                           const std::unordered_map<std::size_t, FeatureVector>& current_features) {
  std::vector<EmpiricalBall> out(drawn.begin(), drawn.end());
  for (auto& ball : out) ball.center = mean_of_members(ball, current_features);
  return out;
}

std::string ReplayPool::to_json() const {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["config"] = {{"capacity", cfg_.capacity},
                 {"admit_purity", cfg_.admit_purity},
                 {"replay_fraction", cfg_.replay_fraction},
                 {"seed", cfg_.seed}};
  auto& arr = j["balls"] = nlohmann::json::array();
  for (const auto& ball : balls_) {
    arr.push_back({{"members", ball.members},
                   {"label", ball.label},
                   {"center", ball.center},
                   {"purity_at_admission", ball.purity_at_admission},
                   {"admitted_step", ball.admitted_step}});
  }
  return j.dump(2);
}

ReplayPool ReplayPool::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("replay checkpoint is not valid JSON: ") + e.what());
  }
  try {
    ReplayConfig cfg;
    const auto& c = j.at("config");
    cfg.capacity = c.at("capacity").get<std::size_t>();
    cfg.admit_purity = c.at("admit_purity").get<double>();
    cfg.replay_fraction = c.at("replay_fraction").get<double>();
    cfg.seed = c.at("seed").get<std::uint64_t>();
    ReplayPool pool(cfg);
    for (const auto& b : j.at("balls")) {
      EmpiricalBall ball;
      ball.members = b.at("members").get<std::vector<std::size_t>>();
      ball.label = b.at("label").get<ClassId>();
      ball.center = b.at("center").get<FeatureVector>();
      ball.purity_at_admission = b.at("purity_at_admission").get<double>();
      ball.admitted_step = b.at("admitted_step").get<std::uint64_t>();
      if (ball.members.empty()) throw DomainError("replay checkpoint holds an empty ball");
      pool.balls_.push_back(std::move(ball));
    }
    while (pool.balls_.size() > cfg.capacity) pool.balls_.pop_front();
    return pool;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed replay checkpoint: ") + e.what());
  }
}

}  // namespace granule
