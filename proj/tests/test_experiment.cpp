#include <cstdlib>

#include <gtest/gtest.h>

#include "granule/experiment.hpp"

using namespace granule;
using nlohmann::json;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg = default_config();
  cfg.synth.classes = 3;
  cfg.synth.per_class = 30;
  cfg.synth.dim = 4;
  cfg.test_per_class = 10;
  cfg.train.steps = 10;
  cfg.train.batch_size = 16;
  cfg.train.hidden_dim = 8;
  cfg.train.feature_dim = 4;
  return cfg;
}

}  // namespace

TEST(Config, RoundTrip) {
  const ExperimentConfig cfg = tiny_config();
  const json doc = config_to_json(cfg);
  EXPECT_EQ(config_to_json(config_from_json(doc)), doc);
}

TEST(Config, MissingKeysKeepDefaults) {
  const auto cfg = config_from_json(json{{"schema_version", 1}, {"train", {{"steps", 7}}}});
  EXPECT_EQ(cfg.train.steps, 7u);
  EXPECT_EQ(cfg.split.purity_threshold, default_config().split.purity_threshold);
}

TEST(Config, Rejections) {
  EXPECT_THROW(config_from_json(json::object()), DomainError);
  EXPECT_THROW(config_from_json(json{{"schema_version", 2}}), DomainError);
  EXPECT_THROW(config_from_json(json{{"schema_version", 1}, {"bogus", 1}}), DomainError);
  EXPECT_THROW(config_from_json(json{{"schema_version", 1}, {"train", {{"stpes", 1}}}}), DomainError);
  EXPECT_THROW(config_from_json(json{{"schema_version", 1}, {"train", {{"mode", "both"}}}}), DomainError);
  EXPECT_THROW(config_from_json(json{{"schema_version", 1}, {"split", {{"purity", 0.4}}}}), DomainError);
  EXPECT_THROW(config_from_json(json{{"schema_version", 1}, {"train", {{"steps", "many"}}}}), DomainError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), DomainError);
}

TEST(Seeds, ComponentSeedsAreDerived) {
  ExperimentConfig a = default_config(), b = default_config();
  apply_seed(a, 1);
  apply_seed(b, 2);
  EXPECT_NE(a.synth.seed, b.synth.seed);
  EXPECT_NE(a.synth.seed, a.noise.seed);
  EXPECT_EQ(a.train.seed, derive_seed(1, "train"));
  EXPECT_EQ(config_from_json(json{{"schema_version", 1}, {"seed", 1}}).noise.seed, a.noise.seed);
}

TEST(Seeds, Environment) {
  ::setenv("GRANULE_SEED", "123", 1);
  EXPECT_EQ(seed_from_env(), 123u);
  ::setenv("GRANULE_SEED", "12x", 1);
  EXPECT_THROW(seed_from_env(), DomainError);
  ::unsetenv("GRANULE_SEED");
  EXPECT_FALSE(seed_from_env().has_value());
}

TEST(Prepare, InjectsTrainingNoiseOnly) {
  ExperimentConfig cfg = tiny_config();
  cfg.noise.rate = 0.2;
  const auto data = prepare_data(cfg);
  EXPECT_EQ(data.train.size(), 90u);
  EXPECT_EQ(data.test.size(), 30u);
  EXPECT_DOUBLE_EQ(data.noise.realized_rate, 18.0 / 90.0);
  for (std::size_t i = 0; i < data.test.size(); ++i) EXPECT_EQ(data.test.labels[i], *data.test.clean_labels[i]);
  EXPECT_NE(data.train.features, data.test.features);
}

TEST(NoiseReport, DeterministicAndConsistent) {
  ExperimentConfig cfg = tiny_config();
  const Dataset d = synthesize(cfg.synth);
  NoiseSpec spec;
  spec.rate = 0.3;
  spec.seed = 4;
  const auto a = to_json(noise_report(d, spec, cfg.split));
  const auto b = to_json(noise_report(d, spec, cfg.split));
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_DOUBLE_EQ(a["before"].get<double>(), 27.0 / 90.0);
  EXPECT_LE(a["after_sample_weighted"].get<double>(), 1.0);
  EXPECT_THROW(noise_report(Dataset{Matrix(1, 1), {0}, {}, 1}, std::nullopt, cfg.split), DomainError);
}

TEST(Training, RunIsReproducible) {
  ExperimentConfig cfg = tiny_config();
  cfg.noise.rate = 0.2;
  const auto data = prepare_data(cfg);
  std::string a, b;
  run_training(cfg, data, [&](const StepMetrics& m) { a += to_json(m).dump() + "\n"; });
  const auto run = run_training(cfg, data, [&](const StepMetrics& m) { b += to_json(m).dump() + "\n"; });
  EXPECT_EQ(a, b);
  const json eval = eval_json(cfg, run);
  EXPECT_EQ(eval["steps"], 10);
  EXPECT_TRUE(eval["noise"]["ball_noise_mean"].is_number());
}

TEST(Compare, RowsPerRateAndMode) {
  ExperimentConfig cfg = tiny_config();
  const std::vector<double> grid{0.0, 0.2};
  const auto rows = run_compare(cfg, grid, 3);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].mode, TrainMode::individual);
  EXPECT_EQ(rows[3].noise_rate, 0.2);
  for (const auto& r : rows) {
    EXPECT_EQ(r.accuracies.size(), 3u);
    EXPECT_GE(r.median, *std::min_element(r.accuracies.begin(), r.accuracies.end()));
  }
  EXPECT_EQ(to_json(rows).dump(), to_json(run_compare(cfg, grid, 3)).dump());
  const std::vector<double> bad{1.0};
  EXPECT_THROW(run_compare(cfg, bad, 3), DomainError);
}
