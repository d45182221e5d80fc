#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "granule/ballgen.hpp"
#include "granule/noise.hpp"
#include "granule/replay.hpp"
#include "granule/trainer.hpp"

namespace granule {

inline constexpr int kConfigSchemaVersion = 1;

/// Everything one run needs. Component seeds are not configured directly: they
/// are derived from `seed` by apply_seed.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  SynthSpec synth;
  std::size_t test_per_class = 200;
  std::optional<std::filesystem::path> train_csv;
  std::optional<std::filesystem::path> test_csv;
  NoiseSpec noise;
  SplitConfig split;
  ReplayConfig replay;
  TrainConfig train;
};

/// The default desk-scale experiment.
ExperimentConfig default_config();

/// Set the global seed and fan it out to every component:
/// component seed = splitmix64(seed ^ fnv1a(name)) with names "synth",
/// "synth.test", "noise", "split", "replay", "train".
void apply_seed(ExperimentConfig& cfg, std::uint64_t seed);

/// Value of GRANULE_SEED when set; throws DomainError if it is not an integer.
std::optional<std::uint64_t> seed_from_env();

/// Parse a config document. Missing keys keep their defaults; unknown keys
/// and a schema_version other than 1 are rejected with DomainError.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

struct PreparedData {
  Dataset train;
  Dataset test;
  InjectResult noise;  // noise.data is the training set actually used
};

/// Load or synthesize the train/test sets and inject training noise.
PreparedData prepare_data(const ExperimentConfig& cfg);

struct NoiseReport {
  double rate_requested = 0.0;
  double rate_realized = 0.0;
  NoiseRates rates;
  PartitionStats stats;
};

/// inject (when `noise` is given) -> generate -> noise_rates on the whole set.
NoiseReport noise_report(const Dataset& data, const std::optional<NoiseSpec>& noise, const SplitConfig& split);
nlohmann::json to_json(const NoiseReport& report);

nlohmann::json to_json(const StepMetrics& m);

struct RunResult {
  std::vector<StepMetrics> metrics;
  ModelParams params;
  double test_accuracy = 0.0;
  double rate_requested = 0.0;
  double rate_realized = 0.0;
  std::size_t steps_per_epoch = 1;
  std::size_t pool_size = 0;
  std::string pool_checkpoint;  // ReplayPool::to_json of the final pool
};

/// Train per `cfg` and evaluate on the clean test set. `on_step` sees every
/// step's metrics as they are produced.
RunResult run_training(const ExperimentConfig& cfg, const PreparedData& data,
                       const std::function<void(const StepMetrics&)>& on_step = {});
nlohmann::json eval_json(const ExperimentConfig& cfg, const RunResult& run);

struct CompareRow {
  double noise_rate = 0.0;
  TrainMode mode = TrainMode::individual;
  std::vector<double> accuracies;  // one per seed, seed order
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for one seed
  double median = 0.0;
};

/// Both modes at every grid rate over `seeds` seeds. Seed s of a cell uses
/// global seed derive_seed(base.seed, s), so the two modes see the same data.
/// Cells run in parallel; the result does not depend on the thread count.
std::vector<CompareRow> run_compare(const ExperimentConfig& base, std::span<const double> noise_grid,
                                    std::size_t seeds);
nlohmann::json to_json(std::span<const CompareRow> rows);
std::string to_csv(std::span<const CompareRow> rows);

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

}  // namespace granule
