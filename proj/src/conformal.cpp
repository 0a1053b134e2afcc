#include "eraps/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eraps/parallel.hpp"
#include "eraps/scores.hpp"

namespace eraps {

namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw PreconditionError("alpha must lie in [0, 1)");
}

// Least k in [1, n] with k / n >= 1 - alpha, evaluated with the same floating
// expression the counting rule uses.
std::size_t quantile_rank(std::size_t n, double alpha) {
  const double target = 1.0 - alpha;
  const double nd = static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(target * nd));
  k = std::clamp<std::size_t>(k, 1, n);
  while (k > 1 && static_cast<double>(k - 1) / nd >= target) --k;
  while (k < n && static_cast<double>(k) / nd < target) ++k;
  return k;
}

// Mean of positions [lo, hi) of the expanded sorted sequence.
double expanded_range_mean(const std::vector<std::pair<double, std::size_t>>& sorted, std::size_t lo,
                           std::size_t hi) {
  double total = 0.0;
  std::size_t pos = 0;
  for (const auto& [value, weight] : sorted) {
    const std::size_t begin = std::max(pos, lo);
    const std::size_t end = std::min(pos + weight, hi);
    if (end > begin) total += value * static_cast<double>(end - begin);
    pos += weight;
    if (pos >= hi) break;
  }
  return total / static_cast<double>(hi - lo);
}

}  // namespace

double calibration_threshold(std::span<const double> scores, double alpha) {
  if (scores.empty()) throw PreconditionError("calibration_threshold: empty window");
  check_alpha(alpha);
  const std::size_t k = quantile_rank(scores.size(), alpha);
  std::vector<double> work(scores.begin(), scores.end());
  std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(k - 1), work.end());
  return work[k - 1];
}

double calibration_threshold(const ScoreWindow& window, double alpha) {
  return calibration_threshold(window.values(), alpha);
}

PredictionSet build_set(const ProbVector& p, double u, const RegParams& reg, double threshold,
                        std::size_t index) {
  PredictionSet set{index, {}};
  for (const auto& s : score_all_labels(p, u, reg)) {
    if (s.score < threshold) set.labels.push_back(s.label);
  }
  return set;
}

PredictionSet naive_set(const ProbVector& p, double alpha, std::size_t index) {
  check_alpha(alpha);
  PredictionSet set{index, {}};
  double mass = 0.0;
  for (int c : p.descending_order()) {
    set.labels.push_back(c);
    mass += p[static_cast<std::size_t>(c)];
    if (mass >= 1.0 - alpha) break;
  }
  return set;
}

ClassThresholds class_conditional_thresholds(std::span<const double> scores, std::span<const int> labels,
                                             std::size_t num_classes, double alpha) {
  if (scores.size() != labels.size()) throw PreconditionError("class_conditional_thresholds: length mismatch");
  ClassThresholds out;
  out.marginal = calibration_threshold(scores, alpha);
  std::vector<std::vector<double>> by_class(num_classes);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == kUnseenLabel) continue;
    by_class.at(static_cast<std::size_t>(labels[i])).push_back(scores[i]);
  }
  out.per_class.resize(num_classes);
  out.counts.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    out.counts[c] = by_class[c].size();
    out.per_class[c] = by_class[c].empty() ? out.marginal : calibration_threshold(by_class[c], alpha);
  }
  out.max = *std::max_element(out.per_class.begin(), out.per_class.end());
  return out;
}

std::string to_string(CalibrationMode mode) {
  switch (mode) {
    case CalibrationMode::kMarginal: return "marginal";
    case CalibrationMode::kClassConditional: return "class";
    case CalibrationMode::kClassMax: return "class-max";
  }
  return "marginal";
}

CalibrationMode calibration_mode_from_string(const std::string& name) {
  if (name == "marginal" || name == "off" || name == "false") return CalibrationMode::kMarginal;
  if (name == "class" || name == "on" || name == "true") return CalibrationMode::kClassConditional;
  if (name == "class-max" || name == "max") return CalibrationMode::kClassMax;
  throw PreconditionError("unknown calibration mode '" + name + "'");
}

CalibrationState::CalibrationState(std::span<const double> scores, std::span<const int> labels,
                                   std::size_t num_classes, double alpha, RegParams reg,
                                   CalibrationMode mode)
    : num_classes_(num_classes),
      alpha_(alpha),
      reg_(reg),
      mode_(mode),
      window_(std::max<std::size_t>(scores.size(), 1)) {
  check_alpha(alpha);
  if (scores.empty()) throw PreconditionError("CalibrationState: no calibration scores");
  if (scores.size() != labels.size()) throw PreconditionError("CalibrationState: length mismatch");
  reg_.validate(num_classes);
  window_.slide(scores);
  if (mode_ != CalibrationMode::kMarginal) {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int y : labels) {
      if (y != kUnseenLabel) ++counts.at(static_cast<std::size_t>(y));
    }
    for (std::size_t c = 0; c < num_classes; ++c) class_windows_.emplace_back(std::max<std::size_t>(counts[c], 1));
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (labels[i] != kUnseenLabel) class_windows_[static_cast<std::size_t>(labels[i])].push(scores[i]);
    }
  }
}

void CalibrationState::refresh() {
  if (!dirty_) return;
  marginal_threshold_ = calibration_threshold(window_, alpha_);
  if (mode_ != CalibrationMode::kMarginal) {
    class_thresholds_.assign(num_classes_, marginal_threshold_);
    for (std::size_t c = 0; c < num_classes_; ++c) {
      if (!class_windows_[c].empty()) class_thresholds_[c] = calibration_threshold(class_windows_[c], alpha_);
    }
  }
  dirty_ = false;
}

double CalibrationState::threshold() {
  refresh();
  if (mode_ == CalibrationMode::kClassMax) {
    return *std::max_element(class_thresholds_.begin(), class_thresholds_.end());
  }
  return marginal_threshold_;
}

double CalibrationState::class_threshold(int c) {
  refresh();
  if (mode_ == CalibrationMode::kMarginal) return marginal_threshold_;
  return class_thresholds_.at(static_cast<std::size_t>(c));
}

PredictionSet CalibrationState::predict(std::size_t t, const ProbVector& p, double u) {
  if (p.size() != num_classes_) throw DimensionError("CalibrationState::predict: wrong class count");
  PredictionSet set;
  if (mode_ == CalibrationMode::kClassConditional) {
    refresh();
    set.index = t;
    for (const auto& s : score_all_labels(p, u, reg_)) {
      if (s.score < class_thresholds_[static_cast<std::size_t>(s.label)]) set.labels.push_back(s.label);
    }
  } else {
    set = build_set(p, u, reg_, threshold(), t);
  }
  cache_.insert_or_assign(t, Cached{p, u});
  return set;
}

void CalibrationState::reveal(std::size_t t, int label) {
  auto it = cache_.find(t);
  if (it == cache_.end()) {
    throw PreconditionError("CalibrationState::reveal: index " + std::to_string(t) + " was never predicted");
  }
  if (label != kUnseenLabel) {
    const double score = raps_score(it->second.p, label, it->second.u, reg_);
    window_.push(score);
    if (mode_ != CalibrationMode::kMarginal) class_windows_.at(static_cast<std::size_t>(label)).push(score);
    dirty_ = true;
  }
  cache_.erase(it);
}

std::vector<double> calibration_scores(const ConformalInputs& inputs, const RegParams& reg) {
  std::vector<double> scores(inputs.cal_probs.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = raps_score(inputs.cal_probs[i], inputs.cal_labels[i], inputs.cal_u[i], reg);
  }
  return scores;
}

std::vector<PredictionSet> run_conformal(const ConformalInputs& inputs, std::span<const int> test_labels,
                                         double alpha, const RegParams& reg, const StreamOptions& options) {
  const std::size_t n = inputs.test_probs.size();
  if (options.batch_size > 0 && test_labels.size() != n) {
    throw PreconditionError("run_conformal: sliding needs one label per test index");
  }
  const auto scores = calibration_scores(inputs, reg);
  CalibrationState state(scores, inputs.cal_labels, inputs.num_classes, alpha, reg, options.mode);
  std::vector<PredictionSet> sets;
  sets.reserve(n);
  const std::size_t s = options.batch_size;
  for (std::size_t j = 0; j < n; ++j) {
    sets.push_back(state.predict(inputs.first_test_index + j, inputs.test_probs[j], inputs.test_u[j]));
    if (s > 0 && (j + 1) % s == 0 && j + 1 < n) {
      for (std::size_t k = j + 1 - s; k <= j; ++k) state.reveal(inputs.first_test_index + k, test_labels[k]);
    }
  }
  return sets;
}

std::vector<PredictionSet> run_naive(const ConformalInputs& inputs, double alpha) {
  std::vector<PredictionSet> sets;
  sets.reserve(inputs.test_probs.size());
  for (std::size_t j = 0; j < inputs.test_probs.size(); ++j) {
    sets.push_back(naive_set(inputs.test_probs[j], alpha, inputs.first_test_index + j));
  }
  return sets;
}

// ---------------------------------------------------------------------------

SrapsFit sraps_fit(const LabeledSeries& train, const LabeledSeries& test, const SrapsOptions& options) {
  const std::size_t T = train.size();
  if (T < 2) throw PreconditionError("sraps: need at least 2 training points to split");
  if (!test.empty() && test.dim() != train.dim()) throw DimensionError("sraps: test dimension mismatch");
  const std::size_t n_fit = T / 2;

  std::vector<std::size_t> order(T);
  std::iota(order.begin(), order.end(), 0);
  if (options.split == SplitMode::kRandom) {
    const RandomSource rs = RandomSource(options.split_seed).derive("split");
    for (std::size_t i = T - 1; i > 0; --i) std::swap(order[i], order[rs.index_at(i, i + 1)]);
  }
  SrapsFit out;
  out.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_fit));
  out.calibration_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_fit), order.end());
  std::sort(out.train_indices.begin(), out.train_indices.end());
  std::sort(out.calibration_indices.begin(), out.calibration_indices.end());

  out.model = fit(options.spec, train.gather(out.train_indices));

  const RandomSource u_source = RandomSource(options.seed).derive("u");
  auto u_at = [&](std::size_t t) { return options.randomize ? u_source.uniform_at(t) : 0.0; };

  ConformalInputs& in = out.inputs;
  in.num_classes = train.num_classes();
  for (std::size_t t : out.calibration_indices) {
    in.cal_probs.push_back(out.model.predict_proba(train.row(t)));
    in.cal_labels.push_back(train.label(t));
    in.cal_u.push_back(u_at(t));
  }
  in.first_test_index = T;
  for (std::size_t j = 0; j < test.size(); ++j) {
    in.test_probs.push_back(out.model.predict_proba(test.row(j)));
    in.test_u.push_back(u_at(T + j));
  }
  return out;
}

std::vector<PredictionSet> sraps(const LabeledSeries& train, const LabeledSeries& test, double alpha,
                                 const RegParams& reg, const SrapsOptions& options) {
  const auto fitted = sraps_fit(train, test, options);
  return run_conformal(fitted.inputs, {}, alpha, reg, StreamOptions{});
}

// ---------------------------------------------------------------------------

void Aggregation::validate() const {
  if (kind == AggregationKind::kTrimmedMean && !(trim_fraction >= 0.0 && trim_fraction < 0.5)) {
    throw PreconditionError("trimmed mean fraction must lie in [0, 0.5)");
  }
}

ProbVector Aggregation::apply(std::span<const ProbVector> rows, std::span<const std::size_t> weights) const {
  if (rows.empty() || rows.size() != weights.size()) throw PreconditionError("Aggregation: bad input");
  const std::size_t K = rows.front().size();
  const std::size_t total = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
  if (total == 0) throw PreconditionError("Aggregation: zero total weight");
  std::vector<double> out(K, 0.0);

  if (kind == AggregationKind::kMean) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < K; ++c) out[c] += static_cast<double>(weights[i]) * rows[i][c];
    }
    for (double& v : out) v /= static_cast<double>(total);
    return ProbVector(std::move(out));
  }

  std::size_t lo = 0;
  std::size_t hi = total;
  if (kind == AggregationKind::kMedian) {
    lo = total % 2 == 1 ? total / 2 : total / 2 - 1;
    hi = total / 2 + 1;
  } else {
    const auto trim = static_cast<std::size_t>(std::floor(trim_fraction * static_cast<double>(total)));
    lo = trim;
    hi = total - trim;
  }
  std::vector<std::pair<double, std::size_t>> column(rows.size());
  for (std::size_t c = 0; c < K; ++c) {
    for (std::size_t i = 0; i < rows.size(); ++i) column[i] = {rows[i][c], weights[i]};
    std::sort(column.begin(), column.end());
    out[c] = expanded_range_mean(column, lo, hi);
  }
  return ProbVector(std::move(out));
}

std::string to_string(const Aggregation& phi) {
  switch (phi.kind) {
    case AggregationKind::kMean: return "mean";
    case AggregationKind::kMedian: return "median";
    case AggregationKind::kTrimmedMean: {
      std::string f = std::to_string(phi.trim_fraction);
      while (f.size() > 1 && f.back() == '0') f.pop_back();
      return "trimmed-mean:" + f;
    }
  }
  return "mean";
}

Aggregation aggregation_from_string(const std::string& name) {
  Aggregation phi;
  if (name == "mean") {
    phi.kind = AggregationKind::kMean;
  } else if (name == "median") {
    phi.kind = AggregationKind::kMedian;
  } else if (name.starts_with("trimmed-mean")) {
    phi.kind = AggregationKind::kTrimmedMean;
    if (const auto colon = name.find(':'); colon != std::string::npos) {
      phi.trim_fraction = std::stod(name.substr(colon + 1));
    }
  } else {
    throw PreconditionError("unknown aggregation '" + name + "'");
  }
  phi.validate();
  return phi;
}

ErapsFit::ErapsFit(EnsembleModel ensemble, const LabeledSeries& train, const ErapsOptions& options)
    : ensemble_(std::move(ensemble)),
      num_classes_(train.num_classes()),
      dim_(train.dim()),
      randomize_(options.randomize),
      u_source_(RandomSource(options.seed).derive("u")),
      labels_(train.labels().begin(), train.labels().end()) {
  const std::size_t T = train.size();
  const std::size_t B = ensemble_.size();
  if (B == 0) throw PreconditionError("eraps: need at least one bootstrap model");
  if (T < 2) throw PreconditionError("eraps: need at least 2 training points");
  if (ensemble_.index_sets.size() != B) throw PreconditionError("eraps: one index set per model required");
  ensemble_.phi.validate();
  for (const auto& m : ensemble_.models) {
    if (m.num_classes() != num_classes_ || m.dim() != dim_) throw DimensionError("eraps: model shape mismatch");
  }

  std::vector<std::vector<char>> in_sample(B, std::vector<char>(T, 0));
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i : ensemble_.index_sets[b]) {
      if (i >= T) throw PreconditionError("eraps: bootstrap index out of range");
      in_sample[b][i] = 1;
    }
  }

  std::vector<std::vector<std::size_t>> members(T);
  std::map<std::vector<std::size_t>, std::size_t> groups;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t b = 0; b < B; ++b) {
      if (!in_sample[b][t]) members[t].push_back(b);
    }
    if (members[t].empty()) {
      members[t].resize(B);
      std::iota(members[t].begin(), members[t].end(), std::size_t{0});
      ++fallback_count_;
    }
    ++groups[members[t]];
  }
  loo_groups_.assign(groups.begin(), groups.end());

  mean_weights_.assign(B, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double share = 1.0 / static_cast<double>(members[t].size());
    for (std::size_t b : members[t]) mean_weights_[b] += share;
  }
  for (double& w : mean_weights_) w /= static_cast<double>(T);

  loo_probs_.resize(T);
  parallel_for(T, [&](std::size_t t) {
    std::vector<ProbVector> preds;
    preds.reserve(members[t].size());
    for (std::size_t b : members[t]) preds.push_back(ensemble_.models[b].predict_proba(train.row(t)));
    const std::vector<std::size_t> ones(preds.size(), 1);
    loo_probs_[t] = ensemble_.phi.apply(preds, ones);
  });
}

double ErapsFit::u_at(std::size_t t) const { return randomize_ ? u_source_.uniform_at(t) : 0.0; }

ScoreWindow ErapsFit::loo_scores(const RegParams& reg) const {
  ScoreWindow window(labels_.size());
  for (std::size_t t = 0; t < labels_.size(); ++t) {
    window.push(raps_score(loo_probs_[t], labels_[t], u_at(t), reg));
  }
  return window;
}

ProbVector ErapsFit::predict_from_members(std::span<const ProbVector> member_probs) const {
  if (ensemble_.phi.kind == AggregationKind::kMean) {
    std::vector<double> out(num_classes_, 0.0);
    for (std::size_t b = 0; b < member_probs.size(); ++b) {
      for (std::size_t c = 0; c < num_classes_; ++c) out[c] += mean_weights_[b] * member_probs[b][c];
    }
    return ProbVector(std::move(out));
  }
  std::vector<ProbVector> inner;
  std::vector<std::size_t> counts;
  inner.reserve(loo_groups_.size());
  for (const auto& [group, count] : loo_groups_) {
    std::vector<ProbVector> preds;
    preds.reserve(group.size());
    for (std::size_t b : group) preds.push_back(member_probs[b]);
    const std::vector<std::size_t> ones(preds.size(), 1);
    inner.push_back(ensemble_.phi.apply(preds, ones));
    counts.push_back(count);
  }
  return ensemble_.phi.apply(inner, counts);
}

ProbVector ErapsFit::predict(std::span<const double> x) const {
  if (x.size() != dim_) throw DimensionError("eraps predict: wrong input length");
  std::vector<ProbVector> member_probs;
  member_probs.reserve(ensemble_.size());
  for (const auto& m : ensemble_.models) member_probs.push_back(m.predict_proba(x));
  return predict_from_members(member_probs);
}

ConformalInputs ErapsFit::prepare(const LabeledSeries& test) const {
  if (!test.empty() && test.dim() != dim_) throw DimensionError("eraps: test dimension mismatch");
  ConformalInputs in;
  in.num_classes = num_classes_;
  in.cal_probs = loo_probs_;
  in.cal_labels = labels_;
  const std::size_t T = labels_.size();
  for (std::size_t t = 0; t < T; ++t) in.cal_u.push_back(u_at(t));
  in.first_test_index = T;
  in.test_probs.resize(test.size());
  parallel_for(test.size(), [&](std::size_t j) { in.test_probs[j] = predict(test.row(j)); });
  for (std::size_t j = 0; j < test.size(); ++j) in.test_u.push_back(u_at(T + j));
  return in;
}

ErapsFit eraps_fit(const LabeledSeries& train, const ErapsOptions& options) {
  if (options.num_models == 0) throw PreconditionError("eraps: B must be >= 1");
  const std::size_t T = train.size();
  if (T < 2) throw PreconditionError("eraps: need at least 2 training points");
  options.phi.validate();
  options.spec.validate();

  const std::size_t B = options.num_models;
  const RandomSource root(options.seed);
  const RandomSource bootstrap = root.derive("bootstrap");
  EnsembleModel ensemble;
  ensemble.phi = options.phi;
  ensemble.index_sets.resize(B);
  for (std::size_t b = 0; b < B; ++b) {
    const RandomSource rs = bootstrap.derive(b);
    auto& S = ensemble.index_sets[b];
    S.resize(T);
    for (std::size_t i = 0; i < T; ++i) S[i] = rs.index_at(i, T);
  }
  std::vector<std::optional<FittedClassifier>> fitted(B);
  parallel_for(B, [&](std::size_t b) {
    ClassifierSpec spec = options.spec;
    spec.init_seed = splitmix64(options.spec.init_seed + b);
    fitted[b] = fit(spec, train.gather(ensemble.index_sets[b]));
  });
  ensemble.models.reserve(B);
  for (auto& m : fitted) ensemble.models.push_back(std::move(*m));
  return ErapsFit(std::move(ensemble), train, options);
}

std::vector<PredictionSet> eraps_predict_stream(const ErapsFit& fit, const LabeledSeries& test, double alpha,
                                                const RegParams& reg, std::size_t batch_size,
                                                CalibrationMode mode) {
  if (batch_size == 0) throw PreconditionError("eraps: batch size must be >= 1");
  const auto inputs = fit.prepare(test);
  return run_conformal(inputs, test.labels(), alpha, reg, StreamOptions{batch_size, mode});
}

}  // namespace eraps
