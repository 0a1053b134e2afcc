#include <cmath>

#include "doctest.h"
#include "eraps/core.hpp"
#include "eraps/parallel.hpp"

using namespace eraps;

TEST_CASE("uniform_at is a pure function of seed and index") {
  const RandomSource a(7), b(7), c(8);
  CHECK(a.uniform_at(3) == b.uniform_at(3));
  CHECK(a.uniform_at(3) == a.uniform_at(3));
  CHECK(a.uniform_at(3) != c.uniform_at(3));
  for (std::uint64_t t = 0; t < 1000; ++t) {
    const double u = a.uniform_at(t);
    CHECK((u >= 0.0 && u < 1.0));
  }
}

TEST_CASE("uniform stream has mean near one half") {
  const RandomSource rs(2024);
  double total = 0.0;
  constexpr int n = 100000;
  for (int t = 0; t < n; ++t) total += rs.uniform_at(t);
  CHECK(std::abs(total / n - 0.5) < 0.01);
}

TEST_CASE("normal draws have unit variance") {
  const RandomSource rs(5);
  double s1 = 0.0, s2 = 0.0;
  constexpr int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = rs.normal_at(i);
    s1 += z;
    s2 += z * z;
  }
  CHECK(std::abs(s1 / n) < 0.02);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("derived streams are independent of each other") {
  const RandomSource root(1);
  CHECK(root.derive("u").uniform_at(0) != root.derive("bootstrap").uniform_at(0));
  CHECK(root.derive(1).uniform_at(0) != root.derive(2).uniform_at(0));
  CHECK(root.derive("u").uniform_at(9) == RandomSource(1).derive("u").uniform_at(9));
}

TEST_CASE("ProbVector renormalizes and rejects bad input") {
  const ProbVector p({2.0, 1.0, 1.0});
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.25));
  CHECK_THROWS_AS(ProbVector({0.5, -0.1, 0.6}), PreconditionError);
  CHECK_THROWS_AS(ProbVector({0.0, 0.0}), PreconditionError);
  CHECK_THROWS_AS(ProbVector(std::vector<double>{}), PreconditionError);
  CHECK_THROWS_AS(ProbVector({NAN, 1.0}), PreconditionError);

  const RandomSource rs(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> w(1 + trial % 9);
    for (std::size_t c = 0; c < w.size(); ++c) w[c] = 1e3 * rs.uniform_at(trial * 16 + c) + 1e-9;
    const ProbVector q(w);
    double total = 0.0;
    for (double v : q.values()) {
      CHECK(v >= 0.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("descending order breaks ties by label index") {
  const ProbVector p({0.2, 0.4, 0.2, 0.2});
  CHECK(p.descending_order() == std::vector<int>{1, 0, 2, 3});
  CHECK(p.argmax() == 1);
}

TEST_CASE("RegParams bounds") {
  CHECK_NOTHROW((RegParams{0.0, 1}.validate(3)));
  CHECK_NOTHROW((RegParams{2.5, 3}.validate(3)));
  CHECK_THROWS_AS((RegParams{-1.0, 1}.validate(3)), PreconditionError);
  CHECK_THROWS_AS((RegParams{1.0, 0}.validate(3)), PreconditionError);
  CHECK_THROWS_AS((RegParams{1.0, 4}.validate(3)), PreconditionError);
}

TEST_CASE("ScoreWindow keeps the most recent min(n, T) scores in order") {
  for (std::size_t capacity : {1u, 3u, 7u}) {
    for (std::size_t n = 0; n < 20; ++n) {
      ScoreWindow w(capacity);
      for (std::size_t i = 0; i < n; ++i) w.push(static_cast<double>(i));
      REQUIRE(w.size() == std::min(n, capacity));
      const auto v = w.values();
      for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == static_cast<double>(n - v.size() + i));
    }
  }
  ScoreWindow w(3);
  w.slide(std::vector<double>{1, 2, 3, 4, 5});
  CHECK(w.values() == std::vector<double>{3, 4, 5});
  CHECK_THROWS_AS(ScoreWindow(0), PreconditionError);
}

TEST_CASE("LabeledSeries validates shape and labels") {
  LabeledSeries s(3, 2);
  s.push_back(std::vector<double>{1.0, 2.0}, 0);
  s.push_back(std::vector<double>{3.0, 4.0}, 2);
  CHECK(s.size() == 2);
  CHECK(s.row(1)[0] == 3.0);
  CHECK_THROWS_AS(s.push_back(std::vector<double>{1.0}, 0), DimensionError);
  CHECK_THROWS_AS(s.push_back(std::vector<double>{1.0, 2.0}, 3), PreconditionError);
  CHECK_THROWS_AS(LabeledSeries(3, 2, {1.0, 2.0, 3.0}, {0, 1}), DimensionError);

  const std::vector<std::size_t> idx{1, 1, 0};
  const auto g = s.gather(idx);
  CHECK(g.labels()[0] == 2);
  CHECK(g.labels()[2] == 0);
  const auto sl = s.slice(1, 2);
  CHECK(sl.size() == 1);
  CHECK(sl.label(0) == 2);
}

TEST_CASE("prefix detection") {
  const ProbVector p({0.1, 0.6, 0.3});
  CHECK(is_descending_prefix({0, {}}, p));
  CHECK(is_descending_prefix({0, {1}}, p));
  CHECK(is_descending_prefix({0, {2, 1}}, p));
  CHECK_FALSE(is_descending_prefix({0, {2}}, p));
  CHECK_FALSE(is_descending_prefix({0, {1, 0}}, p));
}

TEST_CASE("parallel_for visits every index once and propagates exceptions") {
  std::vector<int> hits(257, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                    if (i == 4) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
}
