#ifndef ERAPS_CLASSIFIER_HPP_
#define ERAPS_CLASSIFIER_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eraps/core.hpp"
#include "json.hpp"

namespace eraps {

enum class ClassifierKind { kMultinomialLogistic, kOneHiddenLayer };

std::string to_string(ClassifierKind kind);
ClassifierKind classifier_kind_from_string(const std::string& name);

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::kMultinomialLogistic;
  int hidden_width = 16;  // one-hidden-layer net only
  double l2 = 1e-4;
  double learning_rate = 1.0;
  int epochs = 200;
  std::uint64_t init_seed = 0;

  void validate() const;
  friend bool operator==(const ClassifierSpec&, const ClassifierSpec&) = default;
};

/// Mean cross-entropy plus (l2 / 2) * ||weights||^2 over a fixed dataset.
/// Biases are not penalized. Parameter layout:
///   logistic: W[K x d], b[K]
///   net:      W1[H x d], b1[H], W2[K x H], b2[K]   (tanh hidden units)
class Objective {
 public:
  Objective(const ClassifierSpec& spec, const LabeledSeries& data);

  std::size_t parameter_count() const;
  /// Loss at params; fills grad (same length) when non-null.
  double evaluate(std::span<const double> params, std::vector<double>* grad) const;
  /// Parameters drawn i.i.d. N(0, scale^2) from seed.
  std::vector<double> random_point(std::uint64_t seed, double scale) const;

  /// Class probabilities for one input row under the given parameters.
  void forward(std::span<const double> params, std::span<const double> x,
               std::span<double> probs, std::span<double> hidden) const;

 private:
  ClassifierSpec spec_;
  const LabeledSeries* data_;
  std::size_t K_;
  std::size_t d_;
  std::size_t H_;
};

class FittedClassifier {
 public:
  ProbVector predict_proba(std::span<const double> x) const;

  std::size_t num_classes() const { return K_; }
  std::size_t dim() const { return d_; }
  const ClassifierSpec& spec() const { return spec_; }
  std::span<const double> parameters() const { return params_; }
  const std::vector<double>& loss_trace() const { return loss_trace_; }
  /// Number of learning-rate halvings applied during training.
  int halvings() const { return halvings_; }

  nlohmann::json to_json() const;
  static FittedClassifier from_json(const nlohmann::json& j);

  /// Builds a model from raw parameters with identity standardization.
  static FittedClassifier from_parameters(const ClassifierSpec& spec, std::size_t num_classes,
                                          std::size_t dim, std::vector<double> params);

 private:
  friend FittedClassifier fit(const ClassifierSpec&, const LabeledSeries&);

  ClassifierSpec spec_;
  std::size_t K_ = 0;
  std::size_t d_ = 0;
  std::vector<double> mean_;
  std::vector<double> inv_scale_;
  std::vector<double> params_;
  std::vector<double> loss_trace_;
  int halvings_ = 0;
};

/// Full-batch gradient descent on standardized inputs. Each epoch must not
/// increase the loss by more than 1e-8; otherwise the step size is halved
/// and the epoch retried, at most 30 times.
FittedClassifier fit(const ClassifierSpec& spec, const LabeledSeries& data);

/// Max relative error between the analytic gradient and central finite
/// differences (step 1e-5) at a random parameter point.
double gradient_check(const ClassifierSpec& spec, const LabeledSeries& data,
                      std::uint64_t seed = 1);

}  // namespace eraps

#endif  // ERAPS_CLASSIFIER_HPP_
