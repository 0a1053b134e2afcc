#ifndef ERAPS_SYNTH_HPP_
#define ERAPS_SYNTH_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eraps/classifier.hpp"
#include "eraps/conformal.hpp"
#include "eraps/core.hpp"
#include "json.hpp"

namespace eraps {

struct DgpConfig {
  std::size_t num_classes = 5;
  std::size_t dim = 8;
  double rho = 0.5;          // AR(1) coefficient in [0, 1)
  double noise_scale = 1.0;  // stationary standard deviation of each feature
  double drift = 0.0;        // per-step drift of the logit weights
  std::uint64_t seed = 0;    // draws W (and the drift direction)

  void validate() const;
};

struct SyntheticSample {
  LabeledSeries series;
  std::vector<ProbVector> true_pi;  // pi_{x_t} per index
};

/// Gaussian AR(1) features x_t = rho x_{t-1} + sqrt(1 - rho^2) * noise_scale * eps_t
/// started from stationarity; labels y_t ~ softmax(W_t x_t) with
/// W_t = W + drift * t * D. W and D have i.i.d. N(0, 1) entries.
class SyntheticDGP {
 public:
  explicit SyntheticDGP(DgpConfig config);

  const DgpConfig& config() const { return config_; }
  std::span<const double> weights() const { return weights_; }

  ProbVector pi(std::span<const double> x, std::size_t t = 0) const;

  /// n consecutive points; `draw_seed` selects the realization.
  SyntheticSample generate(std::size_t n, std::uint64_t draw_seed) const;

 private:
  DgpConfig config_;
  std::vector<double> weights_;
  std::vector<double> drift_direction_;
};

/// Smallest descending-probability prefix of the true pi with mass >= 1 - alpha.
PredictionSet oracle_set(const ProbVector& pi, double alpha, std::size_t index = 0);

/// |A symmetric-difference B|.
std::size_t symmetric_difference_size(const PredictionSet& a, const PredictionSet& b);

/// Exact sup_x |F_n(x) - x| for a sample from Unif[0, 1], evaluating both
/// one-sided limits at every jump.
double ks_distance_uniform(std::vector<double> sample);

/// sqrt(log(16 T) / T).
double dkw_rate(std::size_t T);

enum class TheoryMethod { kEraps, kSraps, kOracle };

std::string to_string(TheoryMethod method);
TheoryMethod theory_method_from_string(const std::string& name);

struct ExperimentOptions {
  TheoryMethod method = TheoryMethod::kEraps;
  std::size_t num_models = 30;
  Aggregation phi;
  ClassifierSpec spec;
  RegParams reg{1.0, 2};
  std::size_t test_size = 1000;
  std::size_t batch_size = 1;  // ERAPS sliding; SRAPS never slides
  std::uint64_t seed = 0;
};

struct GapRow {
  double alpha = 0.0;
  std::size_t T = 0;
  std::size_t reps = 0;
  double mean_coverage = 0.0;
  double mean_gap = 0.0;
  double gap_std_error = 0.0;
  double rate = 0.0;  // sqrt(log(16T)/T)
};

struct ConvergenceRow {
  double alpha = 0.0;
  std::size_t T = 0;
  std::size_t reps = 0;
  std::size_t points = 0;
  double fraction_within_one = 0.0;
  double mean_difference = 0.0;
};

struct DkwRow {
  std::size_t T = 0;
  std::size_t reps = 0;
  double exceedance = 0.0;
  double bound = 0.0;
  double mean_distance = 0.0;
};

struct TheoryReport {
  std::string experiment;  // "coverage-gap" | "set-convergence" | "dkw"
  std::string method;
  std::uint64_t seed = 0;
  std::vector<GapRow> gap;
  std::vector<ConvergenceRow> convergence;
  std::vector<DkwRow> dkw;
  /// Coverage gap: for every alpha, each gap is at most the previous one plus
  /// one standard error of their difference.
  bool gap_nonincreasing = true;
};

/// Per (alpha, T): |marginal coverage - (1 - alpha)| averaged over reps, each
/// rep on a fresh draw of T training and options.test_size test points.
TheoryReport coverage_gap_experiment(const DgpConfig& dgp, const ExperimentOptions& options,
                                     std::span<const double> alphas, std::span<const std::size_t> sizes,
                                     std::size_t reps);

/// Per T: fraction of test points with |C delta C*| <= 1, using the plain
/// total-mass score (lambda = 0, no randomization).
TheoryReport set_convergence_experiment(const DgpConfig& dgp, const ExperimentOptions& options, double alpha,
                                        std::span<const std::size_t> sizes, std::size_t reps);

/// Per T: frequency over reps with sup |F_T - F| > sqrt(log(16T)/T), F = Unif[0, 1].
TheoryReport dkw_experiment(std::span<const std::size_t> sizes, std::size_t reps, std::uint64_t seed);

nlohmann::json to_json(const TheoryReport& report);
std::string to_csv(const TheoryReport& report);

}  // namespace eraps

#endif  // ERAPS_SYNTH_HPP_
