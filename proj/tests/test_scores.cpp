#include <cmath>

#include "doctest.h"
#include "eraps/scores.hpp"
#include "test_support.hpp"

using namespace eraps;

TEST_CASE("mass_above examples") {
  const ProbVector p({0.5, 0.3, 0.2});
  CHECK(mass_above(p, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mass_above(p, 2) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(mass_above(p, 0) == 0.0);
  for (std::size_t K : {2u, 5u, 11u}) {
    const auto u = ProbVector::uniform(K);
    for (std::size_t c = 0; c < K; ++c) CHECK(mass_above(u, static_cast<int>(c)) == 0.0);
  }
  CHECK_THROWS_AS(mass_above(p, 3), PreconditionError);
  CHECK_THROWS_AS(mass_above(p, -1), PreconditionError);
}

TEST_CASE("rank_of examples") {
  CHECK(rank_of(ProbVector({0.2, 0.5, 0.3}), 0) == 3);
  CHECK(rank_of(ProbVector({0.5, 0.3, 0.2}), 0) == 1);
  const auto u = ProbVector::uniform(4);
  for (int c = 0; c < 4; ++c) CHECK(rank_of(u, c) == 1);
  // tied labels share the best rank
  const ProbVector tied({0.4, 0.3, 0.3});
  CHECK(rank_of(tied, 1) == 2);
  CHECK(rank_of(tied, 2) == 2);
  CHECK_THROWS_AS(rank_of(u, 4), PreconditionError);
}

TEST_CASE("raps_score examples") {
  const ProbVector p({0.5, 0.3, 0.2});
  CHECK(std::abs(raps_score(p, 1, 0.5, {1.0, 1}) - 1.65) <= 1e-12);
  CHECK(raps_score(p, p.argmax(), 0.0, {0.0, 1}) == 0.0);
  const auto u = ProbVector::uniform(4);
  for (int c = 0; c < 4; ++c) CHECK(std::abs(raps_score(u, c, 0.2, {2.0, 1}) - 0.05) <= 1e-15);
  CHECK_THROWS_AS(raps_score(p, 0, 1.0, {1.0, 1}), PreconditionError);
  CHECK_THROWS_AS(raps_score(p, 0, -0.1, {1.0, 1}), PreconditionError);
}

TEST_CASE("score_all_labels examples") {
  const ProbVector p({0.5, 0.3, 0.2});
  const auto s = score_all_labels(p, 0.5, {1.0, 1});
  REQUIRE(s.size() == 3);
  CHECK(s[0].label == 0);
  CHECK(s[1].label == 1);
  CHECK(s[2].label == 2);
  CHECK(s[0].score == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(s[1].score == doctest::Approx(1.65).epsilon(1e-14));
  CHECK(s[2].score == doctest::Approx(2.90).epsilon(1e-14));
  CHECK(s[2].rank == 3);

  // lambda = 0, u = 0: cumulative mass above each label
  const ProbVector q({0.1, 0.4, 0.25, 0.25});
  for (const auto& sl : score_all_labels(q, 0.0, {0.0, 1})) CHECK(sl.score == mass_above(q, sl.label));

  const auto flat = score_all_labels(ProbVector::uniform(6), 0.7, {3.0, 1});
  for (const auto& sl : flat) CHECK(sl.score == flat.front().score);
}

TEST_CASE("scores agree with the brute-force formula") {
  const RandomSource rs(99);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t K = 2 + trial % 9;
    const auto p = testing::random_prob(rs, trial * 64ULL, K, true);
    const double u = rs.uniform_at(trial * 64ULL + 40);
    const RegParams reg{5.0 * rs.uniform_at(trial * 64ULL + 41), 1 + static_cast<int>(rs.index_at(trial * 64ULL + 42, K))};
    for (std::size_t c = 0; c < K; ++c) {
      const double expect = testing::brute_force_score(p.values(), static_cast<int>(c), u, reg.lambda, reg.k_reg);
      CHECK(raps_score(p, static_cast<int>(c), u, reg) == doctest::Approx(expect).epsilon(1e-13));
    }
  }
}

TEST_CASE("scores are nondecreasing along the descending order") {
  const RandomSource rs(17);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t K = 2 + trial % 12;
    const auto p = testing::random_prob(rs, trial * 64ULL, K, true);
    const double u = rs.uniform_at(trial * 64ULL + 50);
    const RegParams reg{3.0 * rs.uniform_at(trial * 64ULL + 51), 1 + static_cast<int>(rs.index_at(trial * 64ULL + 52, K))};
    const auto s = score_all_labels(p, u, reg);
    for (std::size_t i = 1; i < s.size(); ++i) REQUIRE(s[i].score >= s[i - 1].score);
  }
}

TEST_CASE("score strictly increases in lambda past k_reg") {
  const ProbVector p({0.4, 0.3, 0.2, 0.1});
  const int c = 3;  // rank 4
  double prev = raps_score(p, c, 0.3, {0.0, 2});
  for (double lambda : {0.1, 0.5, 1.0, 4.0}) {
    const double s = raps_score(p, c, 0.3, {lambda, 2});
    CHECK(s > prev);
    prev = s;
  }
  // rank <= k_reg: no penalty at all
  CHECK(raps_score(p, 1, 0.3, {0.0, 2}) == raps_score(p, 1, 0.3, {9.0, 2}));
}

TEST_CASE("lambda = 0, u = 0 reduces to the total-mass score") {
  const RandomSource rs(4);
  for (int trial = 0; trial < 500; ++trial) {
    const auto p = testing::random_prob(rs, trial * 32ULL, 6, true);
    for (int c = 0; c < 6; ++c) CHECK(raps_score(p, c, 0.0, {0.0, 1}) == mass_above(p, c));
  }
}

TEST_CASE("swapping tied labels swaps their scores") {
  const ProbVector p({0.1, 0.3, 0.3, 0.3});
  const ProbVector q({0.3, 0.3, 0.1, 0.3});  // labels 0 and 2 exchanged
  const RegParams reg{1.0, 1};
  CHECK(raps_score(p, 0, 0.4, reg) == raps_score(q, 2, 0.4, reg));
  CHECK(raps_score(p, 2, 0.4, reg) == raps_score(q, 0, 0.4, reg));
  CHECK(raps_score(p, 1, 0.4, reg) == raps_score(p, 3, 0.4, reg));
}
