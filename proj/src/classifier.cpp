#include "eraps/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace eraps {

namespace {

constexpr double kMonotoneTolerance = 1e-8;
constexpr int kMaxHalvings = 30;

void softmax_inplace(std::span<double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : z) v /= total;
}

// -log softmax(z)[y], computed from raw logits.
double nll_from_logits(std::span<const double> z, int y) {
  const double top = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - top);
  return top + std::log(total) - z[static_cast<std::size_t>(y)];
}

}  // namespace

std::string to_string(ClassifierKind kind) {
  return kind == ClassifierKind::kMultinomialLogistic ? "logistic" : "net";
}

ClassifierKind classifier_kind_from_string(const std::string& name) {
  if (name == "logistic" || name == "multinomial-logistic") return ClassifierKind::kMultinomialLogistic;
  if (name == "net" || name == "one-hidden-layer-net") return ClassifierKind::kOneHiddenLayer;
  throw PreconditionError("unknown classifier kind '" + name + "'");
}

void ClassifierSpec::validate() const {
  if (epochs < 1) throw PreconditionError("ClassifierSpec: epochs must be >= 1");
  if (kind == ClassifierKind::kOneHiddenLayer && hidden_width < 1) {
    throw PreconditionError("ClassifierSpec: hidden_width must be >= 1");
  }
  if (!(l2 >= 0.0)) throw PreconditionError("ClassifierSpec: l2 must be >= 0");
  if (!(learning_rate > 0.0)) throw PreconditionError("ClassifierSpec: learning_rate must be > 0");
}

Objective::Objective(const ClassifierSpec& spec, const LabeledSeries& data)
    : spec_(spec),
      data_(&data),
      K_(data.num_classes()),
      d_(data.dim()),
      H_(spec.kind == ClassifierKind::kOneHiddenLayer ? static_cast<std::size_t>(spec.hidden_width) : 0) {
  spec_.validate();
}

std::size_t Objective::parameter_count() const {
  if (spec_.kind == ClassifierKind::kMultinomialLogistic) return K_ * d_ + K_;
  return H_ * d_ + H_ + K_ * H_ + K_;
}

std::vector<double> Objective::random_point(std::uint64_t seed, double scale) const {
  const RandomSource rs(seed);
  std::vector<double> p(parameter_count());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = scale * rs.normal_at(i);
  return p;
}

void Objective::forward(std::span<const double> params, std::span<const double> x,
                        std::span<double> probs, std::span<double> hidden) const {
  if (spec_.kind == ClassifierKind::kMultinomialLogistic) {
    const double* W = params.data();
    const double* b = W + K_ * d_;
    for (std::size_t k = 0; k < K_; ++k) {
      double z = b[k];
      for (std::size_t j = 0; j < d_; ++j) z += W[k * d_ + j] * x[j];
      probs[k] = z;
    }
  } else {
    const double* W1 = params.data();
    const double* b1 = W1 + H_ * d_;
    const double* W2 = b1 + H_;
    const double* b2 = W2 + K_ * H_;
    for (std::size_t h = 0; h < H_; ++h) {
      double a = b1[h];
      for (std::size_t j = 0; j < d_; ++j) a += W1[h * d_ + j] * x[j];
      hidden[h] = std::tanh(a);
    }
    for (std::size_t k = 0; k < K_; ++k) {
      double z = b2[k];
      for (std::size_t h = 0; h < H_; ++h) z += W2[k * H_ + h] * hidden[h];
      probs[k] = z;
    }
  }
}

double Objective::evaluate(std::span<const double> params, std::vector<double>* grad) const {
  if (params.size() != parameter_count()) throw DimensionError("Objective: wrong parameter count");
  const std::size_t n = data_->size();
  if (n == 0) throw PreconditionError("Objective: empty dataset");
  if (grad) grad->assign(params.size(), 0.0);

  std::vector<double> z(K_), hidden(H_), dhidden(H_);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data_->row(i);
    const int y = data_->label(i);
    forward(params, x, z, hidden);
    loss += nll_from_logits(z, y);
    if (!grad) continue;

    softmax_inplace(z);
    z[static_cast<std::size_t>(y)] -= 1.0;  // z now holds dLoss/dlogits
    double* g = grad->data();
    if (spec_.kind == ClassifierKind::kMultinomialLogistic) {
      double* gW = g;
      double* gb = g + K_ * d_;
      for (std::size_t k = 0; k < K_; ++k) {
        for (std::size_t j = 0; j < d_; ++j) gW[k * d_ + j] += z[k] * x[j];
        gb[k] += z[k];
      }
    } else {
      const double* W2 = params.data() + H_ * d_ + H_;
      double* gW1 = g;
      double* gb1 = gW1 + H_ * d_;
      double* gW2 = gb1 + H_;
      double* gb2 = gW2 + K_ * H_;
      std::fill(dhidden.begin(), dhidden.end(), 0.0);
      for (std::size_t k = 0; k < K_; ++k) {
        for (std::size_t h = 0; h < H_; ++h) {
          gW2[k * H_ + h] += z[k] * hidden[h];
          dhidden[h] += W2[k * H_ + h] * z[k];
        }
        gb2[k] += z[k];
      }
      for (std::size_t h = 0; h < H_; ++h) {
        const double da = dhidden[h] * (1.0 - hidden[h] * hidden[h]);
        for (std::size_t j = 0; j < d_; ++j) gW1[h * d_ + j] += da * x[j];
        gb1[h] += da;
      }
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  loss *= inv_n;
  if (grad) {
    for (double& v : *grad) v *= inv_n;
  }

  // L2 on weight blocks only.
  auto penalize = [&](std::size_t offset, std::size_t count) {
    for (std::size_t i = offset; i < offset + count; ++i) {
      loss += 0.5 * spec_.l2 * params[i] * params[i];
      if (grad) (*grad)[i] += spec_.l2 * params[i];
    }
  };
  if (spec_.kind == ClassifierKind::kMultinomialLogistic) {
    penalize(0, K_ * d_);
  } else {
    penalize(0, H_ * d_);
    penalize(H_ * d_ + H_, K_ * H_);
  }
  return loss;
}

ProbVector FittedClassifier::predict_proba(std::span<const double> x) const {
  if (x.size() != d_) {
    throw DimensionError("predict_proba: input has length " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(d_));
  }
  std::vector<double> xs(d_);
  for (std::size_t j = 0; j < d_; ++j) xs[j] = (x[j] - mean_[j]) * inv_scale_[j];

  const std::size_t H = spec_.kind == ClassifierKind::kOneHiddenLayer
                            ? static_cast<std::size_t>(spec_.hidden_width) : 0;
  std::vector<double> z(K_), hidden(H);
  // Objective only needs the dims for forward(); the dataset pointer is unused.
  const LabeledSeries shape(K_, d_);
  Objective(spec_, shape).forward(params_, xs, z, hidden);
  softmax_inplace(z);
  // Floor keeps every entry strictly positive even for saturated logits.
  for (double& v : z) v = std::max(v, std::numeric_limits<double>::min());
  return ProbVector(std::move(z));
}

FittedClassifier FittedClassifier::from_parameters(const ClassifierSpec& spec, std::size_t num_classes,
                                                   std::size_t dim, std::vector<double> params) {
  spec.validate();
  FittedClassifier m;
  m.spec_ = spec;
  m.K_ = num_classes;
  m.d_ = dim;
  m.mean_.assign(dim, 0.0);
  m.inv_scale_.assign(dim, 1.0);
  const LabeledSeries shape(num_classes, dim);
  if (params.size() != Objective(spec, shape).parameter_count()) {
    throw DimensionError("FittedClassifier: wrong parameter count");
  }
  m.params_ = std::move(params);
  return m;
}

nlohmann::json FittedClassifier::to_json() const {
  return {
      {"format", "eraps-classifier"},
      {"version", 1},
      {"kind", to_string(spec_.kind)},
      {"hidden_width", spec_.hidden_width},
      {"l2", spec_.l2},
      {"learning_rate", spec_.learning_rate},
      {"epochs", spec_.epochs},
      {"init_seed", spec_.init_seed},
      {"num_classes", K_},
      {"dim", d_},
      {"mean", mean_},
      {"inv_scale", inv_scale_},
      {"parameters", params_},
      {"loss_trace", loss_trace_},
      {"halvings", halvings_},
  };
}

FittedClassifier FittedClassifier::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "eraps-classifier" || j.value("version", 0) != 1) {
    throw PreconditionError("FittedClassifier::from_json: unsupported format or version");
  }
  ClassifierSpec spec;
  spec.kind = classifier_kind_from_string(j.at("kind").get<std::string>());
  spec.hidden_width = j.at("hidden_width").get<int>();
  spec.l2 = j.at("l2").get<double>();
  spec.learning_rate = j.at("learning_rate").get<double>();
  spec.epochs = j.at("epochs").get<int>();
  spec.init_seed = j.at("init_seed").get<std::uint64_t>();
  auto m = from_parameters(spec, j.at("num_classes").get<std::size_t>(), j.at("dim").get<std::size_t>(),
                           j.at("parameters").get<std::vector<double>>());
  m.mean_ = j.at("mean").get<std::vector<double>>();
  m.inv_scale_ = j.at("inv_scale").get<std::vector<double>>();
  if (m.mean_.size() != m.d_ || m.inv_scale_.size() != m.d_) {
    throw DimensionError("FittedClassifier::from_json: standardization length mismatch");
  }
  m.loss_trace_ = j.at("loss_trace").get<std::vector<double>>();
  m.halvings_ = j.at("halvings").get<int>();
  return m;
}

FittedClassifier fit(const ClassifierSpec& spec, const LabeledSeries& data) {
  spec.validate();
  if (data.empty()) throw PreconditionError("fit: empty training data");
  for (int y : data.labels()) {
    if (y == kUnseenLabel) throw PreconditionError("fit: training labels must be known classes");
  }

  const std::size_t n = data.size();
  const std::size_t d = data.dim();
  FittedClassifier model;
  model.spec_ = spec;
  model.K_ = data.num_classes();
  model.d_ = d;
  model.mean_.assign(d, 0.0);
  model.inv_scale_.assign(d, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.row(i);
    for (std::size_t j = 0; j < d; ++j) model.mean_[j] += x[j];
  }
  for (double& m : model.mean_) m /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.row(i);
    for (std::size_t j = 0; j < d; ++j) var[j] += (x[j] - model.mean_[j]) * (x[j] - model.mean_[j]);
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(n));
    model.inv_scale_[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }

  std::vector<double> standardized(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = data.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      standardized[i * d + j] = (x[j] - model.mean_[j]) * model.inv_scale_[j];
    }
  }
  const LabeledSeries train(data.num_classes(), d, std::move(standardized),
                            std::vector<int>(data.labels().begin(), data.labels().end()));
  const Objective objective(spec, train);

  std::vector<double> params(objective.parameter_count(), 0.0);
  if (spec.kind == ClassifierKind::kOneHiddenLayer) {
    // Glorot-style scale per layer; biases start at zero.
    const std::size_t H = static_cast<std::size_t>(spec.hidden_width);
    const std::size_t K = data.num_classes();
    const RandomSource rs(spec.init_seed);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(H));
    for (std::size_t i = 0; i < H * d; ++i) params[i] = s1 * rs.normal_at(i);
    const std::size_t w2 = H * d + H;
    for (std::size_t i = 0; i < K * H; ++i) params[w2 + i] = s2 * rs.normal_at(H * d + i);
  }

  std::vector<double> grad, cand(params.size()), cand_grad;
  double loss = objective.evaluate(params, &grad);
  model.loss_trace_.push_back(loss);
  double lr = spec.learning_rate;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    bool accepted = false;
    double cand_loss = loss;
    for (int attempt = 0; attempt <= kMaxHalvings; ++attempt) {
      for (std::size_t i = 0; i < params.size(); ++i) cand[i] = params[i] - lr * grad[i];
      cand_loss = objective.evaluate(cand, &cand_grad);
      if (std::isfinite(cand_loss) && cand_loss <= loss + kMonotoneTolerance) {
        accepted = true;
        break;
      }
      if (attempt == kMaxHalvings) break;
      lr *= 0.5;
      ++model.halvings_;
    }
    if (!accepted) {
      if (!std::isfinite(cand_loss)) {
        throw DivergenceError("fit: loss is non-finite after " + std::to_string(kMaxHalvings) +
                              " step-size halvings");
      }
      break;  // no descent direction left at machine precision
    }
    params.swap(cand);
    grad.swap(cand_grad);
    loss = cand_loss;
    model.loss_trace_.push_back(loss);
  }
  model.params_ = std::move(params);
  return model;
}

double gradient_check(const ClassifierSpec& spec, const LabeledSeries& data, std::uint64_t seed) {
  const Objective objective(spec, data);
  std::vector<double> point = objective.random_point(seed, 0.5);
  std::vector<double> analytic;
  objective.evaluate(point, &analytic);

  constexpr double kStep = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + kStep;
    const double up = objective.evaluate(point, nullptr);
    point[i] = saved - kStep;
    const double down = objective.evaluate(point, nullptr);
    point[i] = saved;
    const double numeric = (up - down) / (2.0 * kStep);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-4});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace eraps
