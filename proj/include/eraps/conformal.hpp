#ifndef ERAPS_CONFORMAL_HPP_
#define ERAPS_CONFORMAL_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eraps/classifier.hpp"
#include "eraps/core.hpp"

namespace eraps {

// ---------------------------------------------------------------------------
// Thresholds and set rules
// ---------------------------------------------------------------------------

/// The k-th smallest score, where k is the least integer with k/n >= 1 - alpha
/// (i.e. k = ceil((1 - alpha) n) up to floating point). A candidate is then
/// included iff its score is strictly below the threshold, which matches
///   #{j : score_j <= candidate} / n < 1 - alpha
/// exactly, ties included. alpha must lie in [0, 1).
double calibration_threshold(std::span<const double> scores, double alpha);
double calibration_threshold(const ScoreWindow& window, double alpha);

/// {c : raps_score(p, c, u, reg) < threshold}, in descending-probability order.
PredictionSet build_set(const ProbVector& p, double u, const RegParams& reg, double threshold,
                        std::size_t index = 0);

/// Smallest descending-probability prefix with mass >= 1 - alpha; never empty.
PredictionSet naive_set(const ProbVector& p, double alpha, std::size_t index = 0);

struct ClassThresholds {
  std::vector<double> per_class;  // classes without scores get the marginal value
  std::vector<std::size_t> counts;
  double marginal = 0.0;
  double max = 0.0;  // max over per_class
};

/// Per-class thresholds over the scores whose label is that class.
/// Scores labelled kUnseenLabel only enter the marginal threshold.
ClassThresholds class_conditional_thresholds(std::span<const double> scores,
                                             std::span<const int> labels,
                                             std::size_t num_classes, double alpha);

// ---------------------------------------------------------------------------
// Streaming calibration
// ---------------------------------------------------------------------------

enum class CalibrationMode {
  kMarginal,          // one window, one threshold
  kClassConditional,  // label c is tested against its own class threshold
  kClassMax,          // one threshold: the max of the class thresholds
};

std::string to_string(CalibrationMode mode);
CalibrationMode calibration_mode_from_string(const std::string& name);

/// Sliding calibration window plus the cached (p, u) of predicted test
/// indices whose labels are not yet revealed. Single owner; not thread-safe.
class CalibrationState {
 public:
  CalibrationState(std::span<const double> scores, std::span<const int> labels,
                   std::size_t num_classes, double alpha, RegParams reg,
                   CalibrationMode mode = CalibrationMode::kMarginal);

  /// Builds the set for time index t and caches (p, u) until reveal(t).
  PredictionSet predict(std::size_t t, const ProbVector& p, double u);

  /// Scores the revealed label with the cached (p, u) and slides it into the
  /// window(s). Unseen labels release the cache entry without scoring.
  void reveal(std::size_t t, int label);

  double threshold();
  double class_threshold(int c);
  const ScoreWindow& window() const { return window_; }
  const ScoreWindow& class_window(int c) const { return class_windows_.at(static_cast<std::size_t>(c)); }
  std::size_t pending() const { return cache_.size(); }
  bool is_pending(std::size_t t) const { return cache_.contains(t); }

 private:
  struct Cached {
    ProbVector p;
    double u;
  };

  void refresh();

  std::size_t num_classes_;
  double alpha_;
  RegParams reg_;
  CalibrationMode mode_;
  ScoreWindow window_;
  std::vector<ScoreWindow> class_windows_;
  std::map<std::size_t, Cached> cache_;
  bool dirty_ = true;
  double marginal_threshold_ = 0.0;
  std::vector<double> class_thresholds_;
};

/// Everything a conformal run needs once the classifiers have been fitted:
/// calibration distributions with their labels and uniforms, and test
/// distributions with their uniforms. Independent of (alpha, reg).
struct ConformalInputs {
  std::size_t num_classes = 0;
  std::vector<ProbVector> cal_probs;
  std::vector<int> cal_labels;
  std::vector<double> cal_u;
  std::vector<ProbVector> test_probs;
  std::vector<double> test_u;
  std::size_t first_test_index = 0;  // time index of test_probs[0]
};

struct StreamOptions {
  std::size_t batch_size = 0;  // 0 keeps the threshold fixed (no sliding)
  CalibrationMode mode = CalibrationMode::kMarginal;
};

/// Calibration scores for the given regularizer, in calibration order.
std::vector<double> calibration_scores(const ConformalInputs& inputs, const RegParams& reg);

/// Emits one set per test index. With batch_size s > 0, labels are revealed
/// after every s predictions and their scores slide into the window.
std::vector<PredictionSet> run_conformal(const ConformalInputs& inputs, std::span<const int> test_labels,
                                         double alpha, const RegParams& reg, const StreamOptions& options);

/// Naive top-mass sets on the test distributions.
std::vector<PredictionSet> run_naive(const ConformalInputs& inputs, double alpha);

// ---------------------------------------------------------------------------
// Split conformal (SRAPS / SAPS)
// ---------------------------------------------------------------------------

enum class SplitMode { kSequentialHalf, kRandom };

struct SrapsOptions {
  ClassifierSpec spec;
  SplitMode split = SplitMode::kSequentialHalf;
  std::uint64_t split_seed = 0;
  std::uint64_t seed = 0;  // uniforms
  bool randomize = true;   // false forces u = 0
};

struct SrapsFit {
  FittedClassifier model;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> calibration_indices;
  ConformalInputs inputs;
};

/// Fits on the first part, computes calibration inputs on the second part
/// and test inputs for every row of `test` (its labels are not used).
SrapsFit sraps_fit(const LabeledSeries& train, const LabeledSeries& test, const SrapsOptions& options);

std::vector<PredictionSet> sraps(const LabeledSeries& train, const LabeledSeries& test, double alpha,
                                 const RegParams& reg, const SrapsOptions& options);

// ---------------------------------------------------------------------------
// Ensemble conformal (ERAPS)
// ---------------------------------------------------------------------------

enum class AggregationKind { kMean, kMedian, kTrimmedMean };

struct Aggregation {
  AggregationKind kind = AggregationKind::kMean;
  double trim_fraction = 0.1;  // per side, trimmed mean only

  void validate() const;
  /// Aggregates rows of a (count x K) matrix column-wise, each row repeated
  /// weights[i] times, and renormalizes the result.
  ProbVector apply(std::span<const ProbVector> rows, std::span<const std::size_t> weights) const;
};

std::string to_string(const Aggregation& phi);
Aggregation aggregation_from_string(const std::string& name);

struct EnsembleModel {
  std::vector<FittedClassifier> models;
  std::vector<std::vector<std::size_t>> index_sets;  // S_b, |S_b| = T, with replacement
  Aggregation phi;

  std::size_t size() const { return models.size(); }
};

struct ErapsOptions {
  std::size_t num_models = 30;
  Aggregation phi;
  ClassifierSpec spec;
  std::uint64_t seed = 0;
  bool randomize = true;  // false forces u = 0
};

class ErapsFit {
 public:
  /// Leave-one-out aggregation for an already trained ensemble.
  ErapsFit(EnsembleModel ensemble, const LabeledSeries& train, const ErapsOptions& options);

  const EnsembleModel& ensemble() const { return ensemble_; }
  std::size_t train_size() const { return labels_.size(); }
  std::size_t num_classes() const { return num_classes_; }
  /// Indices that appear in every bootstrap sample (aggregated over all B).
  std::size_t fallback_count() const { return fallback_count_; }

  std::span<const ProbVector> loo_predictions() const { return loo_probs_; }
  std::span<const int> train_labels() const { return labels_; }
  double u_at(std::size_t t) const;

  /// LOO scores of all training indices, oldest first, in a window of capacity T.
  ScoreWindow loo_scores(const RegParams& reg) const;

  /// Test-time distribution: phi over the T leave-one-out predictors at x.
  ProbVector predict(std::span<const double> x) const;

  /// Calibration = LOO training predictions; test = predict() per test row.
  ConformalInputs prepare(const LabeledSeries& test) const;

 private:
  ProbVector predict_from_members(std::span<const ProbVector> member_probs) const;

  EnsembleModel ensemble_;
  std::size_t num_classes_;
  std::size_t dim_;
  bool randomize_;
  RandomSource u_source_;
  std::vector<int> labels_;
  std::vector<ProbVector> loo_probs_;
  std::size_t fallback_count_ = 0;
  // LOO member masks with their multiplicity over training indices.
  std::vector<std::pair<std::vector<std::size_t>, std::size_t>> loo_groups_;
  std::vector<double> mean_weights_;  // closed form for phi = mean
};

/// Trains B bootstrap models and computes the LOO calibration state.
ErapsFit eraps_fit(const LabeledSeries& train, const ErapsOptions& options);

/// Streams over `test`, sliding the window after every `batch_size` predictions.
std::vector<PredictionSet> eraps_predict_stream(const ErapsFit& fit, const LabeledSeries& test, double alpha,
                                                const RegParams& reg, std::size_t batch_size,
                                                CalibrationMode mode = CalibrationMode::kMarginal);

}  // namespace eraps

#endif  // ERAPS_CONFORMAL_HPP_
