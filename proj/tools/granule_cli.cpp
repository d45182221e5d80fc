// granule: command-line driver for granular-ball experiments.
//
//   granule synth         write a synthetic Gaussian-blob dataset as CSV
//   granule noise-report  inject label noise, partition, report noise before/after
//   granule train         train one model and write metrics, checkpoint, eval, replay pool
//   granule compare       individual vs gbc across a noise grid and seeds
//   granule config        print the default experiment config
//
// Exit codes: 0 success, 2 input error, 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "granule/experiment.hpp"
#include "granule/kernels.hpp"

namespace fs = std::filesystem;
using granule::DomainError;
using nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

std::vector<std::pair<granule::ClassId, granule::ClassId>> parse_pairs(const std::string& text) {
  std::vector<std::pair<granule::ClassId, granule::ClassId>> pairs;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw DomainError("flip pair '" + item + "' must look like a:b");
    try {
      pairs.emplace_back(static_cast<granule::ClassId>(std::stoul(item.substr(0, colon))),
                         static_cast<granule::ClassId>(std::stoul(item.substr(colon + 1))));
    } catch (const std::logic_error&) {
      throw DomainError("flip pair '" + item + "' must look like a:b");
    }
  }
  return pairs;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot write " + path.string());
  out << text;
  if (!out) throw DomainError("failed writing " + path.string());
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DomainError("cannot create output directory " + dir.string());
}

granule::ExperimentConfig resolve_config(const std::string& path, std::optional<std::uint64_t> seed_flag) {
  granule::ExperimentConfig cfg = path.empty() ? granule::default_config() : granule::load_config(path);
  if (auto env = granule::seed_from_env()) granule::apply_seed(cfg, *env);
  if (seed_flag) granule::apply_seed(cfg, *seed_flag);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Granular-ball computing for learning with noisy labels"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);

  // synth
  granule::SynthSpec synth = granule::default_config().synth;
  std::string placement = "simplex";
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic Gaussian-blob dataset as CSV");
  synth_cmd->add_option("--classes", synth.classes, "Number of classes")->check(CLI::Range(2, 1 << 20));
  synth_cmd->add_option("--per-class", synth.per_class, "Samples per class")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--dim", synth.dim, "Feature dimension")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--separation", synth.separation, "Distance between class means");
  synth_cmd->add_option("--stddev", synth.stddev, "Within-class standard deviation");
  synth_cmd->add_option("--placement", placement, "simplex or random")->check(CLI::IsMember({"simplex", "random"}));
  synth_cmd->add_option("--seed", synth_seed, "Global seed");
  synth_cmd->add_option("--out", synth_out, "Output CSV path")->required();

  // noise-report
  std::string report_data;
  granule::SplitConfig split;
  std::optional<double> noise_rate;
  std::string noise_kind = "symmetric";
  std::string flip_pairs;
  std::uint64_t report_seed = 0;
  std::string report_out;
  auto* report_cmd = app.add_subcommand("noise-report", "Label noise before and after granular-ball generation");
  report_cmd->add_option("--data", report_data, "CSV with a clean_label column")->required();
  report_cmd->add_option("--purity", split.purity_threshold, "Purity threshold in (0.5, 1]");
  report_cmd->add_option("--noise-rate", noise_rate, "Inject this much noise first (default: use labels as given)");
  report_cmd->add_option("--noise-kind", noise_kind, "symmetric or asymmetric")
      ->check(CLI::IsMember({"symmetric", "asymmetric"}));
  report_cmd->add_option("--flip-pairs", flip_pairs, "Asymmetric pairs, e.g. 0:1,2:3");
  report_cmd->add_option("--max-lloyd-iters", split.max_lloyd_iters, "Lloyd iterations per restart");
  report_cmd->add_option("--restarts", split.restarts, "2-means restarts");
  report_cmd->add_option("--min-ball-size", split.min_ball_size, "Do not split balls at or below this size");
  report_cmd->add_option("--seed", report_seed, "Global seed");
  report_cmd->add_option("--out", report_out, "Report path (default: stdout)");

  // train
  std::string train_config;
  std::string train_mode;
  std::optional<std::uint64_t> train_seed;
  std::string train_out;
  auto* train_cmd = app.add_subcommand("train", "Train one model; write metrics.jsonl, checkpoint.gbck, eval.json, replay_pool.json");
  train_cmd->add_option("--config", train_config, "JSON experiment config (default: built-in)");
  train_cmd->add_option("--mode", train_mode, "individual or gbc")->check(CLI::IsMember({"individual", "gbc"}));
  train_cmd->add_option("--seed", train_seed, "Global seed (overrides config and GRANULE_SEED)");
  train_cmd->add_option("--out-dir", train_out, "Output directory")->required();

  // compare
  std::string compare_config;
  std::vector<double> grid{0.0, 0.1, 0.2, 0.3, 0.4};
  std::size_t compare_seeds = 3;
  std::optional<std::uint64_t> compare_seed;
  std::string compare_out;
  auto* compare_cmd = app.add_subcommand("compare", "Individual vs gbc accuracy over a noise grid");
  compare_cmd->add_option("--config", compare_config, "JSON experiment config (default: built-in)");
  compare_cmd->add_option("--noise-grid", grid, "Comma-separated noise rates")->delimiter(',');
  compare_cmd->add_option("--seeds", compare_seeds, "Seeds per cell")->check(CLI::Range(3, 1000));
  compare_cmd->add_option("--seed", compare_seed, "Global seed (overrides config and GRANULE_SEED)");
  compare_cmd->add_option("--out-dir", compare_out, "Output directory")->required();

  auto* config_cmd = app.add_subcommand("config", "Print the default experiment config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }
  if (threads > 0) granule::kernels::set_num_threads(threads);

  try {
    if (*synth_cmd) {
      granule::ExperimentConfig cfg = granule::default_config();
      cfg.synth = synth;
      cfg.synth.placement = placement == "random" ? granule::MeanPlacement::random : granule::MeanPlacement::simplex;
      granule::apply_seed(cfg, granule::seed_from_env().value_or(synth_seed));
      const granule::Dataset data = granule::synthesize(cfg.synth);
      if (fs::path(synth_out).has_parent_path()) fs::create_directories(fs::path(synth_out).parent_path());
      std::ofstream out(synth_out, std::ios::binary);
      if (!out) throw DomainError("cannot write " + synth_out);
      granule::write_csv(data, out);
      std::cout << "wrote " << data.size() << " samples (" << data.classes << " classes, dim " << data.dim()
                << ") to " << synth_out << '\n';
    } else if (*report_cmd) {
      granule::ExperimentConfig cfg = granule::default_config();
      granule::apply_seed(cfg, granule::seed_from_env().value_or(report_seed));
      split.seed = cfg.split.seed;
      split.validate();
      const granule::Dataset data = granule::read_csv(fs::path(report_data));
      std::optional<granule::NoiseSpec> noise;
      if (noise_rate) {
        granule::NoiseSpec spec;
        spec.kind = noise_kind == "asymmetric" ? granule::NoiseKind::asymmetric : granule::NoiseKind::symmetric;
        spec.rate = *noise_rate;
        spec.flip_pairs = parse_pairs(flip_pairs);
        spec.seed = cfg.noise.seed;
        noise = spec;
      }
      const json report = granule::to_json(granule::noise_report(data, noise, split));
      if (report_out.empty()) {
        std::cout << report.dump(2) << '\n';
      } else {
        write_text(report_out, report.dump(2) + "\n");
      }
    } else if (*train_cmd) {
      granule::ExperimentConfig cfg = resolve_config(train_config, train_seed);
      if (!train_mode.empty()) cfg.train.mode = granule::train_mode_from_string(train_mode);
      cfg.train.validate();
      const fs::path dir(train_out);
      prepare_dir(dir);
      const granule::PreparedData data = granule::prepare_data(cfg);
      std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
      if (!metrics) throw DomainError("cannot write " + (dir / "metrics.jsonl").string());
      const auto run = granule::run_training(
          cfg, data, [&](const granule::StepMetrics& m) { metrics << granule::to_json(m).dump() << '\n'; });
      granule::save_checkpoint(run.params, dir / "checkpoint.gbck");
      const json eval = granule::eval_json(cfg, run);
      write_text(dir / "eval.json", eval.dump(2) + "\n");
      write_text(dir / "config.json", granule::config_to_json(cfg).dump(2) + "\n");
      write_text(dir / "replay_pool.json", run.pool_checkpoint + "\n");
      std::cout << eval.dump(2) << '\n';
    } else if (*compare_cmd) {
      granule::ExperimentConfig cfg = resolve_config(compare_config, compare_seed);
      const fs::path dir(compare_out);
      prepare_dir(dir);
      const auto rows = granule::run_compare(cfg, grid, compare_seeds);
      write_text(dir / "compare.json", granule::to_json(rows).dump(2) + "\n");
      write_text(dir / "compare.csv", granule::to_csv(rows));
      std::cout << granule::to_csv(rows);
    } else if (*config_cmd) {
      std::cout << granule::config_to_json(granule::default_config()).dump(2) << '\n';
    }
  } catch (const granule::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DomainError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  }
  return 0;
}
