#ifndef ERAPS_APP_RUNNER_HPP_
#define ERAPS_APP_RUNNER_HPP_

#include <ostream>
#include <string>
#include <vector>

#include "eraps/app/config.hpp"
#include "eraps/eval.hpp"
#include "eraps/synth.hpp"

namespace eraps::app {

struct Dataset {
  LabeledSeries train;
  LabeledSeries test;
  std::vector<std::string> class_names;
  std::string source;
};

/// The CSV named by config.dataset, or a synthetic draw when it is empty.
Dataset load_dataset(const RunConfig& config);

/// Fitted conformal inputs for one method. SRAPS and SAPS share a split fit;
/// the naive method uses one classifier trained on the full training split.
ConformalInputs fit_method(Method method, const Dataset& data, const RunConfig& config);

/// Effective regularizer for a method; SAPS forces lambda = 0.
RegParams effective_reg(Method method, const RunConfig& config);

/// One report per (method, alpha), methods in config order.
std::vector<EvalReport> run_reports(const RunConfig& config, const Dataset& data, std::ostream& log);

/// Grid of reports for config.sweep.alpha, one per (lambda, k_reg) pair and method.
std::vector<EvalReport> run_sweep(const RunConfig& config, const Dataset& data, std::ostream& log);

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyResult {
  TheoryReport gap;
  TheoryReport convergence;
  TheoryReport dkw;
  std::vector<VerifyCheck> checks;
};

VerifyResult run_verify(const RunConfig& config);

/// Writes <output>.json (config echo, timestamp, reports) and <output>.csv.
void write_run_outputs(const RunConfig& config, const std::vector<EvalReport>& reports);
/// Writes <output>_sweep.csv (lambda, k_reg, coverage, mean size) and <output>_sweep.json.
void write_sweep_outputs(const RunConfig& config, const std::vector<EvalReport>& reports);
/// Writes <output>_{gap,convergence,dkw}.{json,csv}.
void write_verify_outputs(const RunConfig& config, const VerifyResult& result);

void print_summary(std::ostream& out, const std::vector<EvalReport>& reports);

}  // namespace eraps::app

#endif  // ERAPS_APP_RUNNER_HPP_
