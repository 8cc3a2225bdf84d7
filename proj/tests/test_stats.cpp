#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "sway/prng.hpp"
#include "sway/stats.hpp"

using namespace sway;

namespace {

PairedOutcome outcome(const std::string& id, int pos, int neg) {
  // -1 encodes an absent (invalid) side
  PairedOutcome o;
  o.item_id = id;
  if (pos >= 0) o.ref_under_pos = pos != 0;
  if (neg >= 0) o.ref_under_neg = neg != 0;
  return o;
}

// Adaptive-free Simpson quadrature of the Student-t density; an independent
// route to the two-sided p-value.
double t_pdf(double x, double df) {
  return std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) /
         std::sqrt(df * M_PI) *
         std::pow(1 + x * x / df, -(df + 1) / 2);
}

double quadrature_two_sided_p(double t, int df) {
  // substitute x = a + u/(1-u) to cover [a, inf) despite heavy tails
  const double a = std::abs(t);
  const int n = 400000;  // even
  const double h = 1.0 / n;
  auto g = [&](double u) {
    if (u >= 1.0) u = 1.0 - 1e-12;
    const double x = a + u / (1.0 - u);
    return t_pdf(x, df) / ((1.0 - u) * (1.0 - u));
  };
  double sum = g(0.0) + g(1.0);
  for (int i = 1; i < n; ++i) sum += g(i * h) * (i % 2 ? 4.0 : 2.0);
  return 2.0 * sum * h / 3.0;
}

}  // namespace

TEST_CASE("xoshiro256** matches the published algorithm") {
  // reference outputs generated from an independent implementation of the
  // published constants, seeded via splitmix64(42)
  Xoshiro256ss rng(42);
  const std::uint64_t expected[6] = {
      0x15780b2e0c2ec716ull, 0x6104d9866d113a7eull, 0xae17533239e499a1ull,
      0xecb8ad4703b360a1ull, 0xfde6dc7fe2ec5e64ull, 0xc50da53101795238ull};
  for (auto want : expected) CHECK(rng.next() == want);

  CHECK(stream_seed(7, 0) == 0xec779c3693f88501ull);
  CHECK(stream_seed(7, 1) == 0x9cebe8a6d050dd01ull);
}

TEST_CASE("bounded draws stay in range and cover the range") {
  Xoshiro256ss rng(3);
  std::vector<int> seen(10, 0);
  for (int i = 0; i < 10000; ++i) {
    auto v = rng.bounded(10);
    REQUIRE(v < 10);
    ++seen[static_cast<size_t>(v)];
  }
  for (int c : seen) CHECK(c > 800);
}

TEST_CASE("nearest-rank percentile on hand-built vectors") {
  std::vector<double> v;
  for (int i = 0; i < 5000; ++i) v.push_back(i);
  CHECK(nearest_rank(v, 2.5) == 124.0);   // rank ceil(125) -> index 124
  CHECK(nearest_rank(v, 97.5) == 4874.0);
  CHECK(nearest_rank(v, 100.0) == 4999.0);

  // known multiset: 100 zeros then 4900 ones
  std::vector<double> m(100, 0.0);
  m.resize(5000, 1.0);
  CHECK(nearest_rank(m, 2.5) == 1.0);
  CHECK(nearest_rank(m, 1.0) == 0.0);  // rank 50
  CHECK(nearest_rank(m, 97.5) == 1.0);

  std::vector<double> tiny = {3.0};
  CHECK(nearest_rank(tiny, 2.5) == 3.0);
  CHECK(nearest_rank(tiny, 97.5) == 3.0);
}

TEST_CASE("bootstrap_ci is deterministic for a fixed seed") {
  PairedOutcomes outcomes;
  Xoshiro256ss rng(11);
  for (int i = 0; i < 60; ++i)
    outcomes.push_back(outcome("i" + std::to_string(i),
                               rng.uniform01() < 0.7 ? 1 : 0,
                               rng.uniform01() < 0.2 ? 1 : 0));
  auto a = bootstrap_ci(outcomes, {}, 2000, 0.05, 99);
  auto b = bootstrap_ci(outcomes, {}, 2000, 0.05, 99);
  CHECK(a.lo == b.lo);
  CHECK(a.hi == b.hi);
  CHECK(a.lo <= a.hi);

  auto c = bootstrap_ci(outcomes, {}, 2000, 0.05, 100);
  CHECK((c.lo != a.lo || c.hi != a.hi));
}

TEST_CASE("degenerate data gives a point interval equal to the point score") {
  PairedOutcomes outcomes;
  for (int i = 0; i < 40; ++i)
    outcomes.push_back(outcome("i" + std::to_string(i), 1, 0));
  auto ci = bootstrap_ci(outcomes, {}, 1000, 0.05, 5);
  const double point = sway_score(1.0, 0.0);
  CHECK(ci.lo == ci.hi);
  CHECK(ci.lo == doctest::Approx(point).epsilon(1e-12));
  CHECK(ci.reliable_sycophancy);
}

TEST_CASE("bootstrap applies the invalid-exclusion rule per resample") {
  // one item lacks its negative side; resamples must still be finite
  PairedOutcomes outcomes = {
      outcome("a", 1, 0),
      outcome("b", 1, -1),
      outcome("c", 0, 1),
      outcome("d", 1, 0),
  };
  auto ci = bootstrap_ci(outcomes, {}, 500, 0.05, 3);
  CHECK(std::isfinite(ci.lo));
  CHECK(std::isfinite(ci.hi));
}

TEST_CASE("bootstrap needs at least two items") {
  PairedOutcomes one = {outcome("a", 1, 0)};
  CHECK_THROWS_AS(bootstrap_ci(one, {}, 100, 0.05, 1), TooFewItems);
}

TEST_CASE("reliable flag means the interval clears zero") {
  PairedOutcomes mixed;
  Xoshiro256ss rng(21);
  for (int i = 0; i < 80; ++i) {
    const int v = rng.uniform01() < 0.5 ? 1 : 0;
    mixed.push_back(outcome("i" + std::to_string(i), v, v));
  }
  auto ci = bootstrap_ci(mixed, {}, 1000, 0.05, 17);
  CHECK(ci.reliable_sycophancy == (ci.lo > 0.0));
}

TEST_CASE("paired t-test spot values") {
  SUBCASE("zero mean gives t = 0, p = 1") {
    auto r = paired_ttest({1, -1, 1, -1});
    REQUIRE(r.defined);
    CHECK(r.t == doctest::Approx(0.0));
    CHECK(r.p == doctest::Approx(1.0));
  }
  SUBCASE("closed-form example") {
    auto r = paired_ttest({1, 2, 3, 4, 5});
    REQUIRE(r.defined);
    CHECK(r.t == doctest::Approx(4.242640687119285).epsilon(1e-12));
    CHECK(r.df == 4);
    CHECK(std::abs(r.p - quadrature_two_sided_p(r.t, r.df)) < 1e-8);
  }
  SUBCASE("zero variance is undefined") {
    auto r = paired_ttest({0, 0, 0, 0});
    CHECK_FALSE(r.defined);
    CHECK(r.reason == "zero variance");
    auto equal = paired_ttest({2.5, 2.5, 2.5});
    CHECK_FALSE(equal.defined);
  }
  SUBCASE("too few observations") {
    CHECK_THROWS_AS(paired_ttest({1.0}), TooFewObservations);
  }
}

TEST_CASE("t statistic matches a long-double recomputation on random vectors") {
  Xoshiro256ss rng(8888);
  for (int trial = 0; trial < 300; ++trial) {
    const size_t n = 2 + rng.bounded(99);
    std::vector<double> diffs(n);
    for (auto& d : diffs) d = rng.uniform01() * 4.0 - 2.0;
    auto r = paired_ttest(diffs);
    if (!r.defined) continue;
    long double mean = 0.0L;
    for (double d : diffs) mean += d;
    mean /= static_cast<long double>(n);
    long double ss = 0.0L;
    for (double d : diffs) ss += (d - mean) * (d - mean);
    const long double sd = sqrtl(ss / static_cast<long double>(n - 1));
    const long double want =
        mean / (sd / sqrtl(static_cast<long double>(n)));
    CHECK(std::abs(r.t - static_cast<double>(want)) < 1e-9);
    CHECK(r.df == static_cast<int>(n) - 1);
    CHECK(r.p > 0.0);
    CHECK(r.p <= 1.0);
  }
}

TEST_CASE("p-values agree with quadrature across df and t") {
  for (int df : {1, 2, 4, 10, 30, 99, 499})
    for (double t : {0.0, 0.3, 1.0, 2.1, 4.24264, 8.0}) {
      const double p = student_t_two_sided_p(t, df);
      CHECK(std::abs(p - quadrature_two_sided_p(t, df)) < 1e-8);
    }
}

TEST_CASE("significance stars use strict thresholds") {
  CHECK(significance_stars(0.0004) == "***");
  CHECK(significance_stars(0.0009) == "***");
  CHECK(significance_stars(0.009) == "**");
  CHECK(significance_stars(0.03) == "*");
  CHECK(significance_stars(0.049) == "*");
  CHECK(significance_stars(0.051) == "");
  CHECK(significance_stars(0.5) == "");
  CHECK(significance_stars(0.05) == "");
  CHECK(significance_stars(0.001) == "**");
  CHECK(significance_stars(0.01) == "*");
}

TEST_CASE("adjacent comparisons pair items across levels") {
  auto stats_for = [](int n, std::function<double(int)> f) {
    std::vector<ItemStat> v;
    for (int i = 0; i < n; ++i)
      v.push_back({"i" + std::to_string(i), f(i)});
    return v;
  };

  SUBCASE("a missing level renders unavailable") {
    std::map<Commitment, std::vector<ItemStat>> by_level;
    by_level[Commitment::Low] = stats_for(10, [](int i) { return i % 2; });
    auto cmps = adjacent_comparisons(by_level);
    REQUIRE(cmps.size() == 2);
    CHECK(cmps[0].outcome.kind == TransitionOutcome::Kind::Unavailable);
    CHECK(cmps[1].outcome.kind == TransitionOutcome::Kind::Unavailable);
    CHECK(render_transition(cmps[0].outcome) == "---");
  }
  SUBCASE("identical values at both levels are undefined, rendered ---") {
    std::map<Commitment, std::vector<ItemStat>> by_level;
    by_level[Commitment::Low] = stats_for(10, [](int) { return 1.0; });
    by_level[Commitment::Medium] = stats_for(10, [](int) { return 1.0; });
    auto cmps = adjacent_comparisons(by_level);
    CHECK(cmps[0].outcome.kind == TransitionOutcome::Kind::Undefined);
    CHECK(render_transition(cmps[0].outcome) == "---");
    CHECK(cmps[1].outcome.kind == TransitionOutcome::Kind::Unavailable);
  }
  SUBCASE("disjoint item sets cannot be paired") {
    std::map<Commitment, std::vector<ItemStat>> by_level;
    by_level[Commitment::Low] = stats_for(5, [](int i) { return i % 2; });
    std::vector<ItemStat> other;
    for (int i = 0; i < 5; ++i)
      other.push_back({"z" + std::to_string(i), 1.0});
    by_level[Commitment::Medium] = other;
    CHECK_THROWS_AS(adjacent_comparisons(by_level), NoPairedItems);
  }
  SUBCASE("negative t when the higher level is more sycophantic") {
    std::map<Commitment, std::vector<ItemStat>> by_level;
    by_level[Commitment::Low] = stats_for(30, [](int i) { return i % 3 == 0; });
    by_level[Commitment::Medium] = stats_for(30, [](int) { return 1.0; });
    by_level[Commitment::High] = stats_for(30, [](int) { return 1.0; });
    auto cmps = adjacent_comparisons(by_level);
    REQUIRE(cmps[0].outcome.kind == TransitionOutcome::Kind::Defined);
    CHECK(cmps[0].outcome.ttest.t < 0.0);
    CHECK(cmps[0].n_paired == 30);
    // L->M defined, M->H has zero variance
    CHECK(cmps[1].outcome.kind == TransitionOutcome::Kind::Undefined);
  }
  SUBCASE("unpaired items are dropped and counted") {
    std::map<Commitment, std::vector<ItemStat>> by_level;
    by_level[Commitment::Low] = stats_for(10, [](int i) { return i % 2; });
    auto medium = stats_for(8, [](int i) { return i % 3 == 0; });
    by_level[Commitment::Medium] = medium;
    auto cmps = adjacent_comparisons(by_level);
    CHECK(cmps[0].n_paired == 8);
    CHECK(cmps[0].n_dropped == 2);
  }
}

TEST_CASE("per-item directions need both sides") {
  PairedOutcomes outcomes = {
      outcome("a", 1, 0),   // +1
      outcome("b", 0, 1),   // -1
      outcome("c", 1, 1),   // 0
      outcome("d", 1, -1),  // dropped
  };
  auto stats = per_item_directions(outcomes);
  REQUIRE(stats.size() == 3);
  CHECK(stats[0].value == 1.0);
  CHECK(stats[1].value == -1.0);
  CHECK(stats[2].value == 0.0);
}

TEST_CASE("build_paired_outcomes folds records by item") {
  auto rec = [](const std::string& item, Polarity pol, const char* label,
                bool valid) {
    ResponseRecord r;
    r.item_id = item;
    r.backend_id = "b";
    r.condition = Condition::at(DatasetKind::DebateQa, 4);
    r.polarity = pol;
    r.stance = valid ? ParsedStance::stance(label)
                     : ParsedStance::invalid("x");
    return r;
  };
  std::vector<ResponseRecord> records = {
      rec("a", Polarity::Positive, "Yes", true),
      rec("a", Polarity::Negative, "No", true),
      rec("b", Polarity::Positive, "", false),
      rec("b", Polarity::Negative, "Yes", true),
  };
  auto outcomes = build_paired_outcomes(records);
  REQUIRE(outcomes.size() == 2);
  CHECK(*outcomes[0].ref_under_pos == true);
  CHECK(*outcomes[0].ref_under_neg == false);
  CHECK_FALSE(outcomes[1].ref_under_pos.has_value());
  CHECK(*outcomes[1].ref_under_neg == true);
}
