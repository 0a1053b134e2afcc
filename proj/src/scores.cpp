#include "eraps/scores.hpp"

#include <algorithm>
#include <string>

namespace eraps {

namespace {

void check_label(const ProbVector& p, int c) {
  if (c < 0 || static_cast<std::size_t>(c) >= p.size()) {
    throw PreconditionError("class index " + std::to_string(c) + " outside [0, " +
                            std::to_string(p.size()) + ")");
  }
}

void check_u(double u) {
  if (!(u >= 0.0 && u < 1.0)) throw PreconditionError("randomization u must lie in [0, 1)");
}

}  // namespace

double mass_above(const ProbVector& p, int c) {
  check_label(p, c);
  const double pc = p[static_cast<std::size_t>(c)];
  double mass = 0.0;
  for (double v : p.values()) {
    if (v > pc) mass += v;
  }
  return mass;
}

int rank_of(const ProbVector& p, int c) {
  check_label(p, c);
  const double pc = p[static_cast<std::size_t>(c)];
  return 1 + static_cast<int>(std::count_if(p.values().begin(), p.values().end(),
                                            [pc](double v) { return v > pc; }));
}

double raps_score(const ProbVector& p, int c, double u, const RegParams& reg) {
  check_u(u);
  const double penalty = reg.lambda * std::max(rank_of(p, c) - reg.k_reg, 0);
  return mass_above(p, c) + p[static_cast<std::size_t>(c)] * u + penalty;
}

std::vector<ScoredLabel> score_all_labels(const ProbVector& p, double u, const RegParams& reg) {
  check_u(u);
  const auto order = p.descending_order();
  std::vector<ScoredLabel> out;
  out.reserve(order.size());
  // Per-label evaluation so batch and single-label scores agree bit for bit.
  for (int c : order) out.push_back({c, raps_score(p, c, u, reg), rank_of(p, c)});
  return out;
}

}  // namespace eraps
