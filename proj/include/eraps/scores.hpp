#ifndef ERAPS_SCORES_HPP_
#define ERAPS_SCORES_HPP_

#include <vector>

#include "eraps/core.hpp"

namespace eraps {

struct ScoredLabel {
  int label = 0;
  double score = 0.0;
  int rank = 1;
};

/// Total probability of labels strictly more likely than c. Ties contribute 0.
double mass_above(const ProbVector& p, int c);

/// 1 + number of labels strictly more likely than c; tied labels share a rank.
int rank_of(const ProbVector& p, int c);

/// Randomized regularized adaptive score:
///   mass_above(p, c) + p(c) * u + lambda * max(rank_of(p, c) - k_reg, 0)
/// With lambda = 0 this is the unregularized adaptive score; with lambda = 0
/// and u = 0 it is the plain total-mass score.
double raps_score(const ProbVector& p, int c, double u, const RegParams& reg);

/// Scores for all labels, in descending-probability order (ties by label
/// index). Scores are nondecreasing along the returned sequence.
std::vector<ScoredLabel> score_all_labels(const ProbVector& p, double u, const RegParams& reg);

}  // namespace eraps

#endif  // ERAPS_SCORES_HPP_
