#ifndef ERAPS_EVAL_HPP_
#define ERAPS_EVAL_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eraps/conformal.hpp"
#include "eraps/core.hpp"
#include "json.hpp"

namespace eraps {

struct MarginalMetrics {
  double coverage = 0.0;
  double mean_size = 0.0;
};

/// Missing values (no test points in a class or stratum) are nullopt, never 0.
struct ClassMetrics {
  std::size_t count = 0;
  std::optional<double> coverage;
  std::optional<double> mean_size;
  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct StratumMetrics {
  double lower = 0.0;  // inclusive
  double upper = 0.0;  // exclusive, except for the last stratum
  std::size_t count = 0;
  std::optional<double> coverage;
  friend bool operator==(const StratumMetrics&, const StratumMetrics&) = default;
};

MarginalMetrics marginal_metrics(std::span<const PredictionSet> sets, std::span<const int> labels);

std::vector<ClassMetrics> class_conditional_metrics(std::span<const PredictionSet> sets,
                                                    std::span<const int> labels, std::size_t num_classes);

/// Bins sets by size. Edges must be strictly increasing with edges.front() <= 0
/// and edges.back() >= K; the last bin is closed on the right.
std::vector<StratumMetrics> set_stratified_metrics(std::span<const PredictionSet> sets,
                                                   std::span<const int> labels, std::span<const double> edges,
                                                   std::size_t num_classes);

/// 0, 2, 4, ... up to the first edge >= K.
std::vector<double> default_strata_edges(std::size_t num_classes);

struct EvalReport {
  std::string method;
  double alpha = 0.0;
  RegParams reg;
  std::uint64_t seed = 0;
  std::string calibration = "marginal";
  std::size_t num_points = 0;
  double coverage = 0.0;
  double mean_size = 0.0;
  std::vector<ClassMetrics> per_class;
  std::vector<StratumMetrics> strata;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct ReportContext {
  std::string method;
  std::uint64_t seed = 0;
  std::string calibration = "marginal";
  std::vector<double> strata_edges;  // empty: default_strata_edges(K)
};

EvalReport evaluate(std::span<const PredictionSet> sets, std::span<const int> labels, std::size_t num_classes,
                    double alpha, const RegParams& reg, const ReportContext& context);

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

/// CSV layout: config echo, marginal coverage and size, per-class columns,
/// per-stratum columns. Numbers carry 17 significant digits; missing is NaN.
std::string csv_header(const EvalReport& shape);
std::string csv_row(const EvalReport& report);
std::string to_csv(std::span<const EvalReport> reports);
std::vector<EvalReport> reports_from_csv(const std::string& text);

/// Full-precision formatting shared by every CSV writer.
std::string format_number(double value);
std::string format_optional(const std::optional<double>& value);

/// Cartesian product of 10 uniformly spaced lambda in [0.01, 10] and 10
/// uniformly spaced k_reg in [1, K - 1], k_reg rounded to the nearest integer.
std::vector<RegParams> default_sweep_grid(std::size_t num_classes);

/// One report per regularizer pair, sorted by (lambda, k_reg). The fitted
/// classifiers behind `inputs` are reused; only scores are recomputed.
std::vector<EvalReport> regularizer_sweep(const ConformalInputs& inputs, std::span<const int> test_labels,
                                          double alpha, std::vector<RegParams> grid,
                                          const StreamOptions& stream, const ReportContext& context);

}  // namespace eraps

#endif  // ERAPS_EVAL_HPP_
