// eraps: conformal prediction sets for time-series classification.
//
//   eraps run     [--config FILE] [flags]   marginal/class/strata reports per (method, alpha)
//   eraps sweep   [--config FILE] [flags]   regularizer grid at sweep.alpha
//   eraps verify  [--config FILE] [flags]   synthetic coverage-gap, set-convergence and DKW checks
//   eraps ingest-check --data FILE [flags]  parse a dataset and print its shape

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "eraps/app/config.hpp"
#include "eraps/app/ingest.hpp"
#include "eraps/app/runner.hpp"

namespace {

using eraps::app::RunConfig;

struct Flags {
  std::string config_path;
  std::map<std::string, std::string> overrides;  // config key -> raw value
  bool class_conditional = false;
};

void add_common_flags(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config_path, "TOML or JSON config file");
  const std::pair<const char*, const char*> keyed[] = {
      {"--seed", "seed"},
      {"--alpha", "alpha"},
      {"--method", "method"},
      {"--lambda", "lambda"},
      {"--kreg", "k_reg"},
      {"--B", "B"},
      {"--batch-size", "batch_size"},
      {"--phi", "phi"},
      {"--output", "output"},
      {"--classes", "data.classes"},
      {"--label-column", "data.label_column"},
      {"--train-count", "data.train_count"},
      {"--strata", "strata"},
      {"--data", "data.path"},
      {"--calibration", "calibration"},
      {"--reps", "verify.reps"},
      {"--epochs", "classifier.epochs"},
      {"--classifier", "classifier.kind"},
  };
  for (const auto& [flag, key] : keyed) {
    const std::string k = key;
    cmd->add_option_function<std::string>(
        flag, [&flags, k](const std::string& v) { flags.overrides[k] = v; },
        "overrides config key '" + k + "' (lists are comma-separated)");
  }
  cmd->add_flag("--class-conditional", flags.class_conditional, "per-class calibration thresholds");
}

RunConfig resolve(const Flags& flags) {
  nlohmann::json tree = flags.config_path.empty() ? nlohmann::json::object()
                                                  : eraps::app::read_config_file(flags.config_path);
  for (const auto& [key, value] : flags.overrides) eraps::app::apply_override(tree, key, value);
  if (flags.class_conditional && !flags.overrides.contains("calibration")) tree["calibration"] = "class";
  return eraps::app::config_from_json(tree);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble and split conformal prediction sets for time-series classification"};
  app.require_subcommand(1);

  Flags run_flags, sweep_flags, verify_flags, ingest_flags;
  auto* run = app.add_subcommand("run", "evaluate methods over the alpha list");
  auto* sweep = app.add_subcommand("sweep", "evaluate a (lambda, k_reg) grid");
  auto* verify = app.add_subcommand("verify", "run the synthetic theory checks");
  auto* ingest = app.add_subcommand("ingest-check", "parse a dataset and report its shape");
  add_common_flags(run, run_flags);
  add_common_flags(sweep, sweep_flags);
  add_common_flags(verify, verify_flags);
  add_common_flags(ingest, ingest_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto config = resolve(run_flags);
      const auto data = eraps::app::load_dataset(config);
      const auto reports = eraps::app::run_reports(config, data, std::cerr);
      eraps::app::write_run_outputs(config, reports);
      eraps::app::print_summary(std::cout, reports);
      std::cout << "wrote " << config.output << ".json and " << config.output << ".csv\n";
    } else if (sweep->parsed()) {
      const auto config = resolve(sweep_flags);
      const auto data = eraps::app::load_dataset(config);
      const auto reports = eraps::app::run_sweep(config, data, std::cerr);
      eraps::app::write_sweep_outputs(config, reports);
      std::cout << "swept " << reports.size() << " cells; wrote " << config.output << "_sweep_*.csv\n";
    } else if (verify->parsed()) {
      const auto config = resolve(verify_flags);
      const auto result = eraps::app::run_verify(config);
      eraps::app::write_verify_outputs(config, result);
      bool ok = true;
      for (const auto& check : result.checks) {
        std::cout << (check.passed ? "PASS  " : "FAIL  ") << check.name << "  (" << check.detail << ")\n";
        ok = ok && check.passed;
      }
      return ok ? 0 : 1;
    } else if (ingest->parsed()) {
      const auto config = resolve(ingest_flags);
      if (config.dataset.empty()) throw eraps::app::ConfigError("config field 'data.path': required for ingest-check");
      eraps::app::IngestOptions opts;
      opts.label_column = config.label_column;
      opts.train_count = config.train_count;
      opts.train_fraction = config.train_fraction;
      opts.classes = config.classes;
      const auto r = eraps::app::ingest_csv_file(config.dataset, opts);
      std::cout << "rows: " << r.train.size() + r.test.size() << " (train " << r.train.size() << ", test "
                << r.test.size() << ")\n"
                << "features: " << r.train.dim() << "\n"
                << "classes: " << r.dictionary.size() << "\n";
      for (std::size_t c = 0; c < r.dictionary.size(); ++c) {
        std::cout << "  " << c << " <- " << r.dictionary.names()[c] << "\n";
      }
      std::cout << "test rows with classes unseen in training: " << r.unseen_test_labels << "\n";
    }
  } catch (const eraps::PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
