#ifndef ERAPS_APP_CONFIG_HPP_
#define ERAPS_APP_CONFIG_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eraps/classifier.hpp"
#include "eraps/conformal.hpp"
#include "eraps/synth.hpp"
#include "json.hpp"

namespace eraps::app {

/// Raised for invalid configuration; the message names the offending field.
struct ConfigError : PreconditionError {
  using PreconditionError::PreconditionError;
};

enum class Method { kEraps, kSraps, kSaps, kNaive };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct SweepConfig {
  double alpha = 0.05;
  std::vector<double> lambdas;  // empty: default grid
  std::vector<int> k_regs;
};

struct VerifyConfig {
  double alpha = 0.1;
  std::string method = "eraps";
  std::vector<std::size_t> gap_sizes{200, 800, 3200};
  std::size_t gap_reps = 20;
  std::vector<std::size_t> convergence_sizes{5000};
  std::size_t convergence_reps = 10;
  std::vector<std::size_t> dkw_sizes{1000};
  std::size_t dkw_reps = 500;
  std::size_t test_size = 1000;
};

struct SynthSource {
  DgpConfig dgp;
  std::size_t train_size = 2000;
  std::size_t test_size = 1000;
};

struct RunConfig {
  std::vector<Method> methods{Method::kEraps};
  std::vector<double> alphas{0.05, 0.075, 0.1, 0.15, 0.2};
  RegParams reg{1.0, 2};
  std::size_t num_models = 30;
  Aggregation phi;
  std::size_t batch_size = 1;
  ClassifierSpec classifier;
  SplitMode split = SplitMode::kSequentialHalf;
  std::uint64_t split_seed = 0;

  std::string dataset;  // empty: synthetic source
  std::string label_column = "label";
  std::optional<std::size_t> train_count;
  double train_fraction = 0.5;
  std::vector<std::string> classes;
  SynthSource synth;

  std::uint64_t seed = 0;
  std::string output = "eraps_report";
  CalibrationMode calibration = CalibrationMode::kMarginal;
  std::vector<double> strata;

  SweepConfig sweep;
  VerifyConfig verify;

  void validate() const;
};

/// Parses a flat TOML document (tables, key = value, one-line arrays of
/// scalars, comments) into JSON. Enough for experiment manifests.
nlohmann::json parse_toml(const std::string& text);

/// Reads a .toml or .json config file into a JSON tree.
nlohmann::json read_config_file(const std::string& path);

/// Sets `key` (dotted for tables, e.g. "classifier.epochs") from a
/// command-line string, inferring the JSON type from the existing defaults.
void apply_override(nlohmann::json& tree, const std::string& key, const std::string& value);

RunConfig config_from_json(const nlohmann::json& tree);
nlohmann::json config_to_json(const RunConfig& config);

}  // namespace eraps::app

#endif  // ERAPS_APP_CONFIG_HPP_
