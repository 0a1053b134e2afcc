#ifndef ERAPS_CORE_HPP_
#define ERAPS_CORE_HPP_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eraps {

// Error hierarchy. Precondition and dimension failures are caller bugs;
// DivergenceError is raised by training when the loss blows up.
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DimensionError : PreconditionError {
  using PreconditionError::PreconditionError;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Label value for a test row whose class never appeared at fit time.
/// Such rows can never be covered and are skipped by calibration updates.
inline constexpr int kUnseenLabel = -1;

/// Time-ordered feature/label pairs. Features are stored row-major.
class LabeledSeries {
 public:
  LabeledSeries() = default;
  LabeledSeries(std::size_t num_classes, std::size_t dim);
  LabeledSeries(std::size_t num_classes, std::size_t dim,
                std::vector<double> features, std::vector<int> labels);

  void push_back(std::span<const double> x, int label);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t dim() const { return dim_; }

  std::span<const double> row(std::size_t i) const {
    return {features_.data() + i * dim_, dim_};
  }
  int label(std::size_t i) const { return labels_[i]; }
  std::span<const int> labels() const { return labels_; }
  std::span<const double> features() const { return features_; }

  /// Rows [begin, end) in time order.
  LabeledSeries slice(std::size_t begin, std::size_t end) const;
  /// Rows at the given indices, repeats allowed (bootstrap samples).
  LabeledSeries gather(std::span<const std::size_t> indices) const;

 private:
  void check_label(int label) const;

  std::size_t num_classes_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> features_;
  std::vector<int> labels_;
};

/// A probability vector over K classes. Construction renormalizes; negative,
/// non-finite or all-zero input is rejected.
class ProbVector {
 public:
  ProbVector() = default;
  explicit ProbVector(std::vector<double> weights);

  static ProbVector uniform(std::size_t num_classes);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t c) const { return probs_[c]; }
  std::span<const double> values() const { return probs_; }

  /// Class indices sorted by descending probability, ties by ascending index.
  std::vector<int> descending_order() const;
  int argmax() const;

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  std::vector<double> probs_;
};

/// Regularization pair (lambda, k_reg) of the RAPS score.
struct RegParams {
  double lambda = 1.0;
  int k_reg = 2;

  void validate(std::size_t num_classes) const;
  friend bool operator==(const RegParams&, const RegParams&) = default;
};

/// FIFO of the most recent calibration scores with fixed capacity.
class ScoreWindow {
 public:
  explicit ScoreWindow(std::size_t capacity);

  /// Appends a score, evicting the oldest one when full.
  void push(double score);
  /// Appends a batch in order; equivalent to repeated push.
  void slide(std::span<const double> scores);

  std::size_t size() const { return scores_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return scores_.empty(); }
  bool full() const { return scores_.size() == capacity_; }

  /// Scores oldest first.
  std::vector<double> values() const { return {scores_.begin(), scores_.end()}; }
  double operator[](std::size_t i) const { return scores_[i]; }

 private:
  std::size_t capacity_;
  std::deque<double> scores_;
};

/// Counter-based deterministic randomness. Every draw is a pure function of
/// (seed, index), so per-index uniforms can be re-addressed at any time.
/// Mixing is SplitMix64; uniforms carry 53 random bits.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t bits_at(std::uint64_t index) const;
  /// Uniform on [0, 1).
  double uniform_at(std::uint64_t index) const;
  /// Standard normal via Box-Muller on the uniform pair (2i, 2i+1).
  double normal_at(std::uint64_t index) const;
  /// Uniform integer in [0, n).
  std::size_t index_at(std::uint64_t index, std::size_t n) const;

  /// Independent substream keyed by a tag.
  RandomSource derive(std::uint64_t tag) const;
  RandomSource derive(std::string_view tag) const;

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Labels chosen for one time index. For RAPS-built sets the labels are
/// stored in descending-probability order.
struct PredictionSet {
  std::size_t index = 0;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  bool contains(int label) const;

  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

/// True when `set` equals the first |set| labels of p's descending order.
bool is_descending_prefix(const PredictionSet& set, const ProbVector& p);

}  // namespace eraps

#endif  // ERAPS_CORE_HPP_
