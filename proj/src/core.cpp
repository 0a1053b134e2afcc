#include "eraps/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace eraps {

LabeledSeries::LabeledSeries(std::size_t num_classes, std::size_t dim)
    : num_classes_(num_classes), dim_(dim) {
  if (num_classes == 0) throw PreconditionError("LabeledSeries: K must be >= 1");
  if (dim == 0) throw PreconditionError("LabeledSeries: d must be >= 1");
}

LabeledSeries::LabeledSeries(std::size_t num_classes, std::size_t dim,
                             std::vector<double> features, std::vector<int> labels)
    : LabeledSeries(num_classes, dim) {
  if (features.size() != labels.size() * dim) {
    throw DimensionError("LabeledSeries: feature count " + std::to_string(features.size()) +
                         " != rows * d = " + std::to_string(labels.size() * dim));
  }
  for (int y : labels) check_label(y);
  features_ = std::move(features);
  labels_ = std::move(labels);
}

void LabeledSeries::check_label(int label) const {
  if (label == kUnseenLabel) return;
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes_) {
    throw PreconditionError("LabeledSeries: label " + std::to_string(label) +
                            " outside [0, " + std::to_string(num_classes_) + ")");
  }
}

void LabeledSeries::push_back(std::span<const double> x, int label) {
  if (x.size() != dim_) {
    throw DimensionError("LabeledSeries: row has length " + std::to_string(x.size()) +
                         ", expected " + std::to_string(dim_));
  }
  check_label(label);
  features_.insert(features_.end(), x.begin(), x.end());
  labels_.push_back(label);
}

LabeledSeries LabeledSeries::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw PreconditionError("LabeledSeries::slice: bad range");
  LabeledSeries out(num_classes_, dim_);
  out.features_.assign(features_.begin() + static_cast<std::ptrdiff_t>(begin * dim_),
                       features_.begin() + static_cast<std::ptrdiff_t>(end * dim_));
  out.labels_.assign(labels_.begin() + static_cast<std::ptrdiff_t>(begin),
                     labels_.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

LabeledSeries LabeledSeries::gather(std::span<const std::size_t> indices) const {
  LabeledSeries out(num_classes_, dim_);
  out.features_.reserve(indices.size() * dim_);
  out.labels_.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw PreconditionError("LabeledSeries::gather: index out of range");
    out.push_back(row(i), labels_[i]);
  }
  return out;
}

ProbVector::ProbVector(std::vector<double> weights) : probs_(std::move(weights)) {
  if (probs_.empty()) throw PreconditionError("ProbVector: empty");
  double total = 0.0;
  for (double w : probs_) {
    if (!std::isfinite(w) || w < 0.0) throw PreconditionError("ProbVector: negative or non-finite entry");
    total += w;
  }
  if (!(total > 0.0)) throw PreconditionError("ProbVector: zero total mass");
  for (double& w : probs_) w /= total;
}

ProbVector ProbVector::uniform(std::size_t num_classes) {
  return ProbVector(std::vector<double>(num_classes, 1.0));
}

std::vector<int> ProbVector::descending_order() const {
  std::vector<int> order(probs_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [this](int a, int b) { return probs_[a] > probs_[b]; });
  return order;
}

int ProbVector::argmax() const {
  return static_cast<int>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

void RegParams::validate(std::size_t num_classes) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw PreconditionError("RegParams: lambda must be finite and >= 0");
  }
  if (k_reg < 1 || static_cast<std::size_t>(k_reg) > num_classes) {
    throw PreconditionError("RegParams: k_reg must lie in [1, K]");
  }
}

ScoreWindow::ScoreWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw PreconditionError("ScoreWindow: capacity must be positive");
}

void ScoreWindow::push(double score) {
  if (scores_.size() == capacity_) scores_.pop_front();
  scores_.push_back(score);
}

void ScoreWindow::slide(std::span<const double> scores) {
  for (double s : scores) push(s);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RandomSource::RandomSource(std::uint64_t seed) : seed_(seed), key_(splitmix64(seed)) {}

std::uint64_t RandomSource::bits_at(std::uint64_t index) const {
  return splitmix64(key_ ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

double RandomSource::uniform_at(std::uint64_t index) const {
  return static_cast<double>(bits_at(index) >> 11) * 0x1.0p-53;
}

double RandomSource::normal_at(std::uint64_t index) const {
  const double u1 = 1.0 - uniform_at(2 * index);  // (0, 1]
  const double u2 = uniform_at(2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t RandomSource::index_at(std::uint64_t index, std::size_t n) const {
  auto i = static_cast<std::size_t>(uniform_at(index) * static_cast<double>(n));
  return std::min(i, n - 1);
}

RandomSource RandomSource::derive(std::uint64_t tag) const {
  return RandomSource(splitmix64(key_ + splitmix64(tag ^ 0xd1b54a32d192ed03ULL)));
}

RandomSource RandomSource::derive(std::string_view tag) const {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : tag) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return derive(h);
}

bool PredictionSet::contains(int label) const {
  return std::find(labels.begin(), labels.end(), label) != labels.end();
}

bool is_descending_prefix(const PredictionSet& set, const ProbVector& p) {
  if (set.size() > p.size()) return false;
  const auto order = p.descending_order();
  std::vector<int> prefix(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(set.size()));
  std::vector<int> got = set.labels;
  std::sort(prefix.begin(), prefix.end());
  std::sort(got.begin(), got.end());
  return prefix == got;
}

}  // namespace eraps
