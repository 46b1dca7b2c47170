#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "../support/quantile_oracle.hpp"
#include "doctest.h"
#include "whatif/conformal.hpp"

using namespace whatif;
using namespace whatif::conformal;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

WeightedScoreDistribution uniform_dist(std::vector<double> scores) {
  const std::vector<double> ones(scores.size(), 1.0);
  return compute_weight_probabilities(scores, ones, 1.0);
}
}  // namespace

TEST_CASE("compute_score") {
  CHECK(compute_score(IntervalSet({2.0}, {5.0}), std::vector{6.0}) == doctest::Approx(1.0));
  CHECK(compute_score(IntervalSet({3.0}, {3.0}), std::vector{3.0}) == 0.0);
  CHECK(compute_score(IntervalSet({0.0, 1.0}, {4.0, 3.0}), std::vector{2.0, 2.0}) == -1.0);
  CHECK_THROWS_AS(compute_score(IntervalSet({0.0, 1.0}, {4.0, 3.0}), std::vector{2.0}),
                  ContractViolation);
  SUBCASE("crossed intervals still score") {
    CHECK(compute_score(IntervalSet({5.0}, {2.0}), std::vector{3.0}) == 2.0);
  }
}

TEST_CASE("compute_weight_probabilities") {
  const std::vector<double> scores{0.1, 0.2, 0.3, 0.4};
  SUBCASE("context-free policy gives uniform atoms") {
    const auto d = compute_weight_probabilities(scores, std::vector<double>(4, 1.0), 1.0);
    for (double p : d.point_probs) CHECK(p == doctest::Approx(0.2));
    CHECK(d.infinity_prob == doctest::Approx(0.2));
  }
  SUBCASE("all calibration weight zero puts everything on the test atom") {
    const auto d = compute_weight_probabilities(scores, std::vector<double>(4, 0.0), 1.0);
    CHECK(d.infinity_prob == 1.0);
  }
  SUBCASE("hand normalization") {
    const auto d = compute_weight_probabilities(std::vector{1.0, 2.0}, std::vector{1.0, 3.0}, 1.0);
    CHECK(d.point_probs[0] == doctest::Approx(0.2));
    CHECK(d.point_probs[1] == doctest::Approx(0.6));
    CHECK(d.infinity_prob == doctest::Approx(0.2));
  }
  SUBCASE("degenerate policy") {
    CHECK_THROWS_AS(compute_weight_probabilities(scores, std::vector<double>(4, 0.0), 0.0),
                    DegeneratePolicyError);
    CHECK_THROWS_AS(compute_weight_probabilities_log(scores, std::vector<double>(4, -kInf), -kInf),
                    DegeneratePolicyError);
  }
  SUBCASE("negative weight rejected") {
    CHECK_THROWS_AS(compute_weight_probabilities(scores, std::vector{1.0, -1.0, 1.0, 1.0}, 1.0),
                    ContractViolation);
  }
  SUBCASE("log-domain normalization survives overflow") {
    const auto d =
        compute_weight_probabilities_log(std::vector{1.0, 2.0}, std::vector{2000.0, 2000.0}, 1000.0);
    CHECK(d.point_probs[0] == doctest::Approx(0.5));
    CHECK(d.infinity_prob == 0.0);
    const auto d2 = compute_weight_probabilities_log(std::vector{1.0, 2.0},
                                                     std::vector{0.0, std::log(3.0)}, 0.0);
    CHECK(d2.point_probs[1] == doctest::Approx(0.6));
  }
  SUBCASE("context-generic front end") {
    const std::vector<int> ctx{1, 3};
    const auto d = compute_weight_probabilities(
        [](int c) { return static_cast<double>(c); }, std::span<const int>(ctx),
        std::vector{5.0, 6.0}, 1);
    CHECK(d.point_probs[1] == doctest::Approx(0.6));
  }
}

TEST_CASE("weighted_quantile examples") {
  SUBCASE("scores 1..9 uniform, alpha 0.2 -> 9") {
    const auto d = uniform_dist({3, 1, 4, 9, 5, 2, 6, 8, 7});
    CHECK(weighted_quantile(d, 0.2) == CorrectionQuantile(9.0));
  }
  SUBCASE("all mass at infinity") {
    WeightedScoreDistribution d{{4.0}, {0.0}, 1.0};
    CHECK(weighted_quantile(d, 0.5).is_infinite());
  }
  SUBCASE("single score, p1 = 0.9: threshold 1.0 is only met at infinity") {
    WeightedScoreDistribution d{{5.0}, {0.9}, 0.1};
    const double oracle = oracle::explicit_formula_quantile({5.0}, {0.9}, 0.1, 0.5);
    CHECK(std::isinf(oracle));
    CHECK(weighted_quantile(d, 0.5).is_infinite());
  }
  SUBCASE("alpha below 1/(N+1) names the minimum") {
    const auto d = uniform_dist({1, 2, 3});
    try {
      (void)weighted_quantile(d, 0.2);
      FAIL("expected PreconditionError");
    } catch (const PreconditionError& e) {
      CHECK(e.min_alpha() == doctest::Approx(0.25));
      CHECK(std::string(e.what()).find("0.25") != std::string::npos);
    }
  }
  SUBCASE("ties share cumulative mass") {
    const auto d = uniform_dist({1, 2, 2, 2, 3});
    // threshold 0.5 * 6 / 5 = 0.6, cumulative at 2 is 4/6.
    CHECK(weighted_quantile(d, 0.5) == CorrectionQuantile(2.0));
  }
}

TEST_CASE("weighted_quantile: explicit formula vs order-statistic reading") {
  // N = 9, alpha = 0.2: the indicator formula picks the 9th smallest score,
  // the ceil((1-alpha)(N+1)) reading the 8th.
  std::vector<double> s{1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(oracle::order_statistic_quantile(s, 0.2) == 8.0);
  CHECK(weighted_quantile(uniform_dist(s), 0.2).value() == 9.0);
}

TEST_CASE("weighted_quantile equals the exhaustive oracle for N_cal <= 12") {
  std::mt19937_64 gen(20240611);
  std::uniform_real_distribution<double> score(-3.0, 3.0);
  std::uniform_real_distribution<double> weight(0.0, 2.0);
  std::uniform_int_distribution<int> small(0, 4);
  int checked = 0;
  for (std::size_t n = 1; n <= 12; ++n) {
    for (int rep = 0; rep < 400; ++rep) {
      std::vector<double> s(n), w(n);
      for (auto& v : s) v = rep % 3 == 0 ? small(gen) : score(gen);  // force ties sometimes
      for (auto& v : w) v = rep % 7 == 0 ? 0.0 : weight(gen);
      const double wt = weight(gen) + 1e-3;
      const auto d = compute_weight_probabilities(s, w, wt);
      const double a_min = 1.0 / (n + 1.0);
      const double alpha = a_min + (0.95 - a_min) * std::uniform_real_distribution<>(0, 1)(gen);
      const double expected = oracle::explicit_formula_quantile(s, d.point_probs, d.infinity_prob,
                                                                alpha);
      CHECK(weighted_quantile(d, alpha).value() == expected);

      std::vector<double> lw(n);
      for (std::size_t i = 0; i < n; ++i) lw[i] = std::log(w[i]);
      const SortedCalibration sorted(s, lw);
      const auto dl = compute_weight_probabilities_log(s, lw, std::log(wt));
      CHECK(sorted.correction(std::log(wt), alpha).value() ==
            oracle::explicit_formula_quantile(s, dl.point_probs, dl.infinity_prob, alpha));
      ++checked;
    }
  }
  CHECK(checked == 12 * 400);
}

TEST_CASE("probability normalization") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> lw(-50.0, 50.0);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t n = 1 + rep % 40;
    std::vector<double> s(n, 0.0), w(n);
    for (auto& v : w) v = lw(gen);
    const auto d = compute_weight_probabilities_log(s, w, lw(gen));
    double total = d.infinity_prob;
    for (double p : d.point_probs) {
      CHECK(p >= 0.0);
      total += p;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("weighted_quantile is nondecreasing in 1 - alpha") {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rep % 30;
    std::vector<double> s(n), w(n);
    for (auto& v : s) v = u(gen) * 10 - 5;
    for (auto& v : w) v = u(gen);
    const auto d = compute_weight_probabilities(s, w, u(gen));
    double prev = -kInf;
    for (double alpha = 0.99; alpha >= 1.0 / (n + 1.0); alpha -= 0.01) {
      const double q = weighted_quantile(d, alpha).value();
      CHECK(q >= prev);
      prev = q;
    }
  }
}

TEST_CASE("prediction sets") {
  const IntervalSet naive({2.0}, {5.0});
  CalibrationScores cal{{0.0}};

  SUBCASE("zero correction keeps the naive interval") {
    const auto s = widen(naive, CorrectionQuantile(0.0));
    CHECK(s.intervals()[0].lo == 2.0);
    CHECK(s.intervals()[0].hi == 5.0);
  }
  SUBCASE("infinite correction is unbounded") {
    const auto s = widen(naive, CorrectionQuantile::infinite());
    CHECK(s.is_unbounded());
    CHECK(s.covers(std::vector{1e300}));
    CHECK(std::isinf(s.width(0)));
  }
  SUBCASE("hand widening") {
    const auto s = widen(naive, CorrectionQuantile(1.5));
    CHECK(s.intervals()[0].lo == 0.5);
    CHECK(s.intervals()[0].hi == 6.5);
  }
  SUBCASE("CKE is the identity, crossed intervals are empty") {
    const auto s = cke_prediction_set(naive);
    CHECK(s.intervals()[0].lo == 2.0);
    CHECK(s.correction().value() == 0.0);
    const auto crossed = cke_prediction_set(IntervalSet({5.0}, {2.0}));
    CHECK(crossed.intervals()[0].empty());
    CHECK(crossed.width(0) == 0.0);
    CHECK_FALSE(crossed.covers(std::vector{3.0}));
    CHECK(cke_prediction_set(IntervalSet({0, 0, 0}, {1, 1, 1})).kpi_count() == 3);
  }
  SUBCASE("NCCKE rejects an empty calibration set") {
    CHECK_THROWS_AS(nccke_prediction_set(naive, CalibrationScores{}, 0.2), ContractViolation);
  }
  SUBCASE("NCCKE with scores 1..9 matches the uniform quantile") {
    CalibrationScores c9{{1, 2, 3, 4, 5, 6, 7, 8, 9}};
    CHECK(nccke_prediction_set(naive, c9, 0.2).correction().value() == 9.0);
  }
}

TEST_CASE("uniform-weight reduction: CCKE with w = 1 equals NCCKE exactly") {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 1 + rep % 60;
    CalibrationScores cal;
    for (std::size_t i = 0; i < n; ++i) cal.scores.push_back(nd(gen));
    const IntervalSet naive({nd(gen), nd(gen)}, {nd(gen) + 2, nd(gen) + 2});
    const double alpha = std::max(0.2, 1.0 / (n + 1.0));
    const auto a = ccke_prediction_set(naive, cal, std::vector<double>(n, 1.0), 1.0, alpha);
    const auto b = nccke_prediction_set(naive, cal, alpha);
    REQUIRE(a.is_unbounded() == b.is_unbounded());
    CHECK(a.correction() == b.correction());
    if (!a.is_unbounded()) {
      for (std::size_t k = 0; k < 2; ++k) {
        CHECK(a.intervals()[k].lo == b.intervals()[k].lo);
        CHECK(a.intervals()[k].hi == b.intervals()[k].hi);
      }
    }
    const SortedCalibration sorted(cal.scores, std::vector<double>(n, 0.0));
    CHECK(sorted.uniform_correction(alpha) == b.correction());
    CHECK(sorted.correction(0.0, alpha) == b.correction());
  }
}

TEST_CASE("widening monotonicity and score/coverage duality") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int rep = 0; rep < 2000; ++rep) {
    const std::size_t k = 1 + rep % 4;
    std::vector<double> lo(k), hi(k), y(k);
    for (std::size_t i = 0; i < k; ++i) {
      lo[i] = nd(gen);
      hi[i] = lo[i] + nd(gen);  // may cross
      y[i] = nd(gen) * 2;
    }
    const IntervalSet naive(lo, hi);
    const double q1 = u(gen) - 1.0;
    const double q2 = q1 + u(gen);
    const auto s1 = widen(naive, CorrectionQuantile(q1));
    const auto s2 = widen(naive, CorrectionQuantile(q2));
    for (std::size_t i = 0; i < k; ++i) {
      const auto& a = s1.intervals()[i];
      const auto& b = s2.intervals()[i];
      if (!a.empty()) CHECK((b.lo <= a.lo && a.hi <= b.hi));
    }
    CHECK(s1.covers(y) == (compute_score(naive, y) <= q1));
  }
}
