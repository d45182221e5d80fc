#include "granule/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace granule {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> known) {
  if (!obj.is_object()) throw DomainError(where + " must be a JSON object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) throw DomainError("unknown config key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double stddev_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

const char* to_cstr(BackwardMode m) { return m == BackwardMode::replicate ? "replicate" : "mean_scaled"; }
const char* to_cstr(LossWeighting w) { return w == LossWeighting::per_ball ? "per_ball" : "size_weighted"; }
const char* to_cstr(NoiseKind k) { return k == NoiseKind::symmetric ? "symmetric" : "asymmetric"; }
const char* to_cstr(MeanPlacement p) { return p == MeanPlacement::simplex ? "simplex" : "random"; }

}  // namespace

std::string to_string(TrainMode mode) { return mode == TrainMode::gbc ? "gbc" : "individual"; }

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "gbc") return TrainMode::gbc;
  if (s == "individual") return TrainMode::individual;
  throw DomainError("mode must be 'individual' or 'gbc', got '" + s + "'");
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.synth.classes = 10;
  cfg.synth.per_class = 500;
  cfg.synth.dim = 16;
  cfg.synth.separation = 4.0;
  cfg.synth.stddev = 1.0;
  cfg.test_per_class = 200;
  cfg.noise.kind = NoiseKind::symmetric;
  cfg.noise.rate = 0.0;
  cfg.split.purity_threshold = 0.9;
  cfg.replay.capacity = 512;
  cfg.replay.admit_purity = 1.0;
  cfg.replay.replay_fraction = 0.25;
  cfg.train.batch_size = 256;
  cfg.train.steps = 600;
  cfg.train.lr.initial = 0.1;
  cfg.train.momentum = 0.9;
  cfg.train.nesterov = true;
  cfg.train.weight_decay = 1e-4;
  cfg.train.mode = TrainMode::gbc;
  apply_seed(cfg, 0);
  return cfg;
}

void apply_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.synth.seed = derive_seed(seed, "synth");
  cfg.noise.seed = derive_seed(seed, "noise");
  cfg.split.seed = derive_seed(seed, "split");
  cfg.replay.seed = derive_seed(seed, "replay");
  cfg.train.seed = derive_seed(seed, "train");
}

std::optional<std::uint64_t> seed_from_env() {
  const char* raw = std::getenv("GRANULE_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  const std::string_view s(raw);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DomainError("GRANULE_SEED must be an unsigned integer, got '" + std::string(s) + "'");
  }
  return v;
}

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig cfg = default_config();
  try {
    reject_unknown(doc, "config", {"schema_version", "seed", "data", "noise", "split", "replay", "train"});
    if (!doc.contains("schema_version") || doc.at("schema_version").get<int>() != kConfigSchemaVersion) {
      throw DomainError("config schema_version must be 1");
    }
    std::uint64_t seed = 0;
    read(doc, "seed", seed);

    if (doc.contains("data")) {
      const auto& d = doc.at("data");
      reject_unknown(d, "data", {"synth", "test_per_class", "train_csv", "test_csv"});
      if (d.contains("synth")) {
        const auto& s = d.at("synth");
        reject_unknown(s, "data.synth", {"classes", "per_class", "dim", "separation", "stddev", "placement"});
        read(s, "classes", cfg.synth.classes);
        read(s, "per_class", cfg.synth.per_class);
        read(s, "dim", cfg.synth.dim);
        read(s, "separation", cfg.synth.separation);
        read(s, "stddev", cfg.synth.stddev);
        if (s.contains("placement")) {
          const auto p = s.at("placement").get<std::string>();
          if (p == "simplex") cfg.synth.placement = MeanPlacement::simplex;
          else if (p == "random") cfg.synth.placement = MeanPlacement::random;
          else throw DomainError("data.synth.placement must be 'simplex' or 'random'");
        }
      }
      read(d, "test_per_class", cfg.test_per_class);
      if (d.contains("train_csv") && !d.at("train_csv").is_null()) cfg.train_csv = d.at("train_csv").get<std::string>();
      if (d.contains("test_csv") && !d.at("test_csv").is_null()) cfg.test_csv = d.at("test_csv").get<std::string>();
    }
    if (doc.contains("noise")) {
      const auto& n = doc.at("noise");
      reject_unknown(n, "noise", {"kind", "rate", "flip_pairs"});
      if (n.contains("kind")) {
        const auto k = n.at("kind").get<std::string>();
        if (k == "symmetric") cfg.noise.kind = NoiseKind::symmetric;
        else if (k == "asymmetric") cfg.noise.kind = NoiseKind::asymmetric;
        else throw DomainError("noise.kind must be 'symmetric' or 'asymmetric'");
      }
      read(n, "rate", cfg.noise.rate);
      if (n.contains("flip_pairs")) {
        cfg.noise.flip_pairs.clear();
        for (const auto& p : n.at("flip_pairs")) {
          if (!p.is_array() || p.size() != 2) throw DomainError("noise.flip_pairs entries must be [a, b]");
          cfg.noise.flip_pairs.emplace_back(p[0].get<ClassId>(), p[1].get<ClassId>());
        }
      }
    }
    if (doc.contains("split")) {
      const auto& s = doc.at("split");
      reject_unknown(s, "split", {"purity", "max_lloyd_iters", "restarts", "min_ball_size"});
      read(s, "purity", cfg.split.purity_threshold);
      read(s, "max_lloyd_iters", cfg.split.max_lloyd_iters);
      read(s, "restarts", cfg.split.restarts);
      read(s, "min_ball_size", cfg.split.min_ball_size);
    }
    if (doc.contains("replay")) {
      const auto& r = doc.at("replay");
      reject_unknown(r, "replay", {"capacity", "admit_purity", "replay_fraction"});
      read(r, "capacity", cfg.replay.capacity);
      read(r, "admit_purity", cfg.replay.admit_purity);
      read(r, "replay_fraction", cfg.replay.replay_fraction);
    }
    if (doc.contains("train")) {
      const auto& t = doc.at("train");
      reject_unknown(t, "train",
                     {"mode", "steps", "batch_size", "lr", "lr_decay_fractions", "lr_decay_factor", "momentum",
                      "nesterov", "weight_decay", "backward_mode", "loss_weighting", "hidden_dim", "feature_dim"});
      if (t.contains("mode")) cfg.train.mode = train_mode_from_string(t.at("mode").get<std::string>());
      read(t, "steps", cfg.train.steps);
      read(t, "batch_size", cfg.train.batch_size);
      read(t, "lr", cfg.train.lr.initial);
      read(t, "lr_decay_fractions", cfg.train.lr.decay_fractions);
      read(t, "lr_decay_factor", cfg.train.lr.factor);
      read(t, "momentum", cfg.train.momentum);
      read(t, "nesterov", cfg.train.nesterov);
      read(t, "weight_decay", cfg.train.weight_decay);
      if (t.contains("backward_mode")) {
        const auto b = t.at("backward_mode").get<std::string>();
        if (b == "mean_scaled") cfg.train.backward_mode = BackwardMode::mean_scaled;
        else if (b == "replicate") cfg.train.backward_mode = BackwardMode::replicate;
        else throw DomainError("train.backward_mode must be 'mean_scaled' or 'replicate'");
      }
      if (t.contains("loss_weighting")) {
        const auto w = t.at("loss_weighting").get<std::string>();
        if (w == "per_ball") cfg.train.loss_weighting = LossWeighting::per_ball;
        else if (w == "size_weighted") cfg.train.loss_weighting = LossWeighting::size_weighted;
        else throw DomainError("train.loss_weighting must be 'per_ball' or 'size_weighted'");
      }
      read(t, "hidden_dim", cfg.train.hidden_dim);
      read(t, "feature_dim", cfg.train.feature_dim);
    }
    apply_seed(cfg, seed);
  } catch (const json::exception& e) {
    throw DomainError(std::string("invalid config: ") + e.what());
  }
  if (!cfg.train_csv) cfg.synth.validate();
  cfg.noise.validate(cfg.synth.classes);
  cfg.split.validate();
  cfg.replay.validate();
  cfg.train.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DomainError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

json config_to_json(const ExperimentConfig& cfg) {
  json data = {{"synth",
                {{"classes", cfg.synth.classes},
                 {"per_class", cfg.synth.per_class},
                 {"dim", cfg.synth.dim},
                 {"separation", cfg.synth.separation},
                 {"stddev", cfg.synth.stddev},
                 {"placement", to_cstr(cfg.synth.placement)}}},
               {"test_per_class", cfg.test_per_class},
               {"train_csv", cfg.train_csv ? json(cfg.train_csv->string()) : json(nullptr)},
               {"test_csv", cfg.test_csv ? json(cfg.test_csv->string()) : json(nullptr)}};
  json pairs = json::array();
  for (const auto& [a, b] : cfg.noise.flip_pairs) pairs.push_back({a, b});
  return {{"schema_version", kConfigSchemaVersion},
          {"seed", cfg.seed},
          {"data", data},
          {"noise", {{"kind", to_cstr(cfg.noise.kind)}, {"rate", cfg.noise.rate}, {"flip_pairs", pairs}}},
          {"split",
           {{"purity", cfg.split.purity_threshold},
            {"max_lloyd_iters", cfg.split.max_lloyd_iters},
            {"restarts", cfg.split.restarts},
            {"min_ball_size", cfg.split.min_ball_size}}},
          {"replay",
           {{"capacity", cfg.replay.capacity},
            {"admit_purity", cfg.replay.admit_purity},
            {"replay_fraction", cfg.replay.replay_fraction}}},
          {"train",
           {{"mode", to_string(cfg.train.mode)},
            {"steps", cfg.train.steps},
            {"batch_size", cfg.train.batch_size},
            {"lr", cfg.train.lr.initial},
            {"lr_decay_fractions", cfg.train.lr.decay_fractions},
            {"lr_decay_factor", cfg.train.lr.factor},
            {"momentum", cfg.train.momentum},
            {"nesterov", cfg.train.nesterov},
            {"weight_decay", cfg.train.weight_decay},
            {"backward_mode", to_cstr(cfg.train.backward_mode)},
            {"loss_weighting", to_cstr(cfg.train.loss_weighting)},
            {"hidden_dim", cfg.train.hidden_dim},
            {"feature_dim", cfg.train.feature_dim}}}};
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData out;
  Dataset clean_train;
  if (cfg.train_csv) {
    clean_train = read_csv(*cfg.train_csv);
  } else {
    clean_train = synthesize(cfg.synth);
  }
  if (cfg.test_csv) {
    out.test = read_csv(*cfg.test_csv, clean_train.classes);
  } else {
    SynthSpec test_spec = cfg.synth;
    test_spec.per_class = cfg.test_per_class;
    test_spec.seed = derive_seed(cfg.seed, "synth.test");
    out.test = synthesize(test_spec);
    if (cfg.synth.placement == MeanPlacement::random) {
      // Random means come from the seed; the test set must share the training means.
      const auto means = class_means(cfg.synth);
      const auto test_means = class_means(test_spec);
      for (std::size_t i = 0; i < out.test.size(); ++i) {
        auto r = out.test.features.row(i);
        const ClassId c = out.test.labels[i];
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += means[c][j] - test_means[c][j];
      }
    }
  }
  clean_train.validate();
  out.test.validate();
  if (out.test.dim() != clean_train.dim()) throw DomainError("train and test feature dimensions differ");

  if (clean_train.has_clean_labels() && cfg.noise.rate > 0.0) {
    out.noise = inject(clean_train, cfg.noise);
  } else {
    out.noise.data = clean_train;
    if (clean_train.has_clean_labels()) {
      std::size_t wrong = 0;
      for (std::size_t i = 0; i < clean_train.size(); ++i) wrong += clean_train.labels[i] != *clean_train.clean_labels[i];
      out.noise.flipped = wrong;
      out.noise.realized_rate = static_cast<double>(wrong) / static_cast<double>(clean_train.size());
    }
  }
  out.train = out.noise.data;
  return out;
}

NoiseReport noise_report(const Dataset& data, const std::optional<NoiseSpec>& noise, const SplitConfig& split) {
  if (!data.has_clean_labels()) throw DomainError("noise report needs a clean_label column");
  NoiseReport report;
  Dataset noisy = data;
  if (noise) {
    InjectResult injected = inject(data, *noise);
    noisy = std::move(injected.data);
    report.rate_requested = noise->rate;
    report.rate_realized = injected.realized_rate;
  }
  const Partition partition = generate(noisy.features, noisy.labels, split);
  report.rates = noise_rates(noisy, partition);
  if (!noise) report.rate_realized = report.rates.sample_rate_before;
  report.stats = partition_stats(partition);
  return report;
}

json to_json(const NoiseReport& r) {
  return {{"schema_version", 1},
          {"rate_requested", r.rate_requested},
          {"rate_realized", r.rate_realized},
          {"before", r.rates.sample_rate_before},
          {"after_sample_weighted", r.rates.gb_sample_rate_after},
          {"after_ball_level", r.rates.gb_ball_rate_after},
          {"m", r.stats.ball_count},
          {"mean_ball_size", r.stats.mean_size}};
}

json to_json(const StepMetrics& m) {
  json j = {{"step", m.step},
            {"lr", m.lr},
            {"loss", m.loss},
            {"batch_size", m.batch_size},
            {"ball_count", m.ball_count},
            {"empirical_balls", m.empirical_balls},
            {"admitted", m.admitted},
            {"mean_ball_size", m.mean_ball_size}};
  j["batch_noise"] = m.batch_noise ? json(*m.batch_noise) : json(nullptr);
  j["ball_noise"] = m.ball_noise ? json(*m.ball_noise) : json(nullptr);
  return j;
}

RunResult run_training(const ExperimentConfig& cfg, const PreparedData& data,
                       const std::function<void(const StepMetrics&)>& on_step) {
  Trainer trainer(data.train, cfg.train, cfg.split, cfg.replay);
  RunResult run;
  run.metrics.reserve(cfg.train.steps);
  while (!trainer.finished()) {
    run.metrics.push_back(trainer.step());
    if (on_step) on_step(run.metrics.back());
  }
  run.params = trainer.params();
  run.test_accuracy = evaluate(run.params, data.test);
  run.rate_requested = cfg.noise.rate;
  run.rate_realized = data.noise.realized_rate;
  run.steps_per_epoch = std::max<std::size_t>(1, (data.train.size() + cfg.train.batch_size - 1) / cfg.train.batch_size);
  run.pool_size = trainer.pool().size();
  run.pool_checkpoint = trainer.pool().to_json();
  return run;
}

json eval_json(const ExperimentConfig& cfg, const RunResult& run) {
  json noise = {{"rate_requested", run.rate_requested}, {"rate_realized", run.rate_realized}};
  const auto& ms = run.metrics;
  const bool tracked = !ms.empty() && ms.front().ball_noise.has_value();
  if (tracked) {
    std::vector<double> before;
    std::vector<double> after;
    for (const auto& m : ms) {
      before.push_back(*m.batch_noise);
      after.push_back(*m.ball_noise);
    }
    const std::size_t tail = std::min(run.steps_per_epoch, after.size());
    noise["batch_noise_mean"] = mean_of(before);
    noise["ball_noise_mean"] = mean_of(after);
    noise["ball_noise_final_epoch"] = mean_of(std::span(after).last(tail));
  } else {
    noise["batch_noise_mean"] = nullptr;
    noise["ball_noise_mean"] = nullptr;
    noise["ball_noise_final_epoch"] = nullptr;
  }
  double balls = 0.0;
  for (const auto& m : ms) balls += static_cast<double>(m.ball_count);
  return {{"schema_version", 1},
          {"mode", to_string(cfg.train.mode)},
          {"seed", cfg.seed},
          {"steps", ms.size()},
          {"test_accuracy", run.test_accuracy},
          {"final_loss", ms.empty() ? 0.0 : ms.back().loss},
          {"mean_ball_count", ms.empty() ? 0.0 : balls / static_cast<double>(ms.size())},
          {"backward_mode", to_cstr(cfg.train.backward_mode)},
          {"loss_weighting", to_cstr(cfg.train.loss_weighting)},
          {"purity", cfg.split.purity_threshold},
          {"replay_fraction", cfg.replay.replay_fraction},
          {"pool_size", run.pool_size},
          {"noise", noise}};
}

std::vector<CompareRow> run_compare(const ExperimentConfig& base, std::span<const double> noise_grid,
                                    std::size_t seeds) {
  if (noise_grid.empty()) throw DomainError("noise grid is empty");
  if (seeds == 0) throw DomainError("need at least one seed");
  for (double r : noise_grid) {
    NoiseSpec probe = base.noise;
    probe.rate = r;
    probe.validate(base.synth.classes);
  }
  const std::array modes{TrainMode::individual, TrainMode::gbc};
  const std::size_t cells = noise_grid.size() * modes.size() * seeds;
  std::vector<double> accuracy(cells, 0.0);
  std::vector<std::string> errors(cells);
  const auto count = static_cast<std::int64_t>(cells);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t c = 0; c < count; ++c) {
    const auto cell = static_cast<std::size_t>(c);
    const std::size_t s = cell % seeds;
    const std::size_t m = (cell / seeds) % modes.size();
    const std::size_t r = cell / (seeds * modes.size());
    try {
      ExperimentConfig cfg = base;
      apply_seed(cfg, derive_seed(base.seed, static_cast<std::uint64_t>(s)));
      cfg.noise.rate = noise_grid[r];
      cfg.train.mode = modes[m];
      const PreparedData data = prepare_data(cfg);
      accuracy[cell] = run_training(cfg, data).test_accuracy;
    } catch (const std::exception& e) {
      errors[cell] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw NumericalError("compare cell failed: " + e);
  }
  std::vector<CompareRow> rows;
  for (std::size_t r = 0; r < noise_grid.size(); ++r) {
    for (std::size_t m = 0; m < modes.size(); ++m) {
      CompareRow row;
      row.noise_rate = noise_grid[r];
      row.mode = modes[m];
      const std::size_t first = (r * modes.size() + m) * seeds;
      row.accuracies.assign(accuracy.begin() + static_cast<std::ptrdiff_t>(first),
                            accuracy.begin() + static_cast<std::ptrdiff_t>(first + seeds));
      row.mean = mean_of(row.accuracies);
      row.stddev = stddev_of(row.accuracies);
      row.median = median_of(row.accuracies);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

json to_json(std::span<const CompareRow> rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    arr.push_back({{"noise_rate", r.noise_rate},
                   {"mode", to_string(r.mode)},
                   {"accuracies", r.accuracies},
                   {"accuracy_mean", r.mean},
                   {"accuracy_std", r.stddev},
                   {"accuracy_median", r.median}});
  }
  return {{"schema_version", 1}, {"rows", arr}};
}

std::string to_csv(std::span<const CompareRow> rows) {
  auto num = [](double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
  };
  std::ostringstream out;
  out << "noise_rate,mode,seeds,accuracy_mean,accuracy_std,accuracy_median\n";
  for (const auto& r : rows) {
    out << num(r.noise_rate) << ',' << to_string(r.mode) << ',' << r.accuracies.size() << ',' << num(r.mean) << ','
        << num(r.stddev) << ',' << num(r.median) << '\n';
  }
  return out.str();
}

}  // namespace granule
