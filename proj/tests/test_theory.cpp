#include <doctest.h>

#include <cmath>
#include <sstream>

#include "catsearch/theory.hpp"

using namespace catsearch;
using namespace catsearch::theory;

TEST_CASE("pac-bayes closed forms") {
  const double a = std::sqrt(std::log(101.0 / 0.01) / 200.0);
  const double b = std::sqrt((5.0 + std::log(1001.0 / 0.05)) / 2000.0);
  CHECK(std::abs(a - 0.21471) < 1e-4);
  CHECK(std::abs(b - 0.08633) < 1e-4);
  CHECK(std::abs(pac_bayes_bound(0, 101, 0.01) - a) < 1e-12);
  CHECK(std::abs(pac_bayes_bound(5, 1001, 0.05) - b) < 1e-12);
  CHECK_THROWS_AS(pac_bayes_bound(0, 1, 0.1), InvalidSampleSize);
}

TEST_CASE("pac-bayes bound decreases in n and increases in kl") {
  RngStream rng(81, 0);
  for (int rep = 0; rep < 1000; ++rep) {
    const double kl = rng.uniform(0.0, 20.0);
    const auto n = 2 + static_cast<std::int64_t>(rng.below(100000));
    const double delta = rng.uniform(0.001, 1.0);
    REQUIRE(pac_bayes_bound(kl, n + 1 + static_cast<std::int64_t>(rng.below(1000)), delta) <
            pac_bayes_bound(kl, n, delta));
    REQUIRE(pac_bayes_bound(kl + rng.uniform(0.01, 5.0), n, delta) > pac_bayes_bound(kl, n, delta));
  }
}

TEST_CASE("dirac bound") {
  const double expected = std::sqrt((std::log(64.0) + std::log(2010.0)) / 400.0);
  CHECK(std::abs(expected - 0.17150) < 1e-4);
  CHECK(std::abs(dirac_bound(1.0 / 64, 201, 0.1) - expected) < 1e-12);
  CHECK(dirac_bound(1.0, 50, 0.1) == pac_bayes_bound(0.0, 50, 0.1));
  CHECK(dirac_bound(0.25, 50, 0.1) > dirac_bound(0.5, 50, 0.1));
  CHECK_THROWS_AS(dirac_bound(0.0, 50, 0.1), InvalidPrior);
}

TEST_CASE("misrank term") {
  CHECK(std::abs(std::exp(-2.0) - 0.13534) < 1e-5);
  CHECK(std::abs(misrank_term(2, 0.4, 0.1) - std::exp(-0.16 / 0.08)) < 1e-15);
  CHECK(misrank_term(1, 0.1, 0.3) == 0.0);
  CHECK(misrank_term(32, 0.2, 1e-6) == 0.0);
  CHECK(misrank_term(32, 0.2, 0.0) == 0.0);
  CHECK_THROWS_AS(misrank_term(4, 0.0, 0.0), DegenerateInputs);
}

TEST_CASE("accuracy lower bound") {
  const double expected = 1.0 * (1.0 - 0.05 - std::exp(-2.0));
  CHECK(std::abs(expected - 0.81466) < 1e-4);
  CHECK(std::abs(accuracy_lower_bound(1.0, 0.05, 2, 0.4, 0.1) - expected) < 1e-15);
  CHECK(accuracy_lower_bound(0.7, 0.0, 8, 0.3, 1e-6) == doctest::Approx(0.7));

  const double vac = accuracy_lower_bound(1.0, 0.05, 100, 0.1, 0.1);
  CHECK(std::abs(99 * std::exp(-0.125) - 87.37) < 0.01);
  CHECK(vac < 0.0);
  CHECK(is_vacuous(vac));
}

TEST_CASE("coverage requirement") {
  const double expected = 0.8 / (1.0 - 0.05 - std::exp(-2.0));
  CHECK(std::abs(expected - 0.98200) < 1e-4);
  CHECK(std::abs(coverage_requirement(0.8, 0.05, 2, 0.4, 0.1) - expected) < 1e-15);
  const double denom = 1.0 - 0.05 - misrank_term(2, 0.4, 0.1);
  CHECK(coverage_requirement(denom, 0.05, 2, 0.4, 0.1) == 1.0);
  CHECK_THROWS_AS(coverage_requirement(0.5, 0.05, 100, 0.1, 0.1), VacuousBound);
}

TEST_CASE("accuracy bound monotonicity") {
  RngStream rng(82, 0);
  for (int rep = 0; rep < 2000; ++rep) {
    const double p = rng.uniform();
    const double delta = rng.uniform(0.0, 0.2);
    const int N = 1 + static_cast<int>(rng.below(64));
    const double g = rng.uniform(0.01, 0.5);
    const double e = rng.uniform(0.01, 0.3);
    const double base = accuracy_lower_bound(p, delta, N, g, e);
    REQUIRE(accuracy_lower_bound(p, delta, N, g, e + rng.uniform(0.0, 0.1)) <= base);
    REQUIRE(accuracy_lower_bound(p, delta, N + 1 + static_cast<int>(rng.below(8)), g, e) <= base);
    REQUIRE(accuracy_lower_bound(p, delta, N, g + rng.uniform(0.0, 0.1), e) >= base);
    if (base >= 0.0) REQUIRE(accuracy_lower_bound(std::min(1.0, p + rng.uniform(0.0, 0.2)), delta, N, g, e) >= base);
  }
}

TEST_CASE("forced-gap trials realize at least the requested gap") {
  RngStream rng(83, 0);
  const GapGridPoint point{0.05, 0.3, 8};
  for (int t = 0; t < 2000; ++t) REQUIRE(run_gap_trial(point, rng.derive(t), rng.next()).gap >= 0.3 - 1e-12);
}

TEST_CASE("with a perfect scorer accuracy equals coverage") {
  const GapGridPoint point{0.0, 0.2, 8};
  const auto r = verify_accuracy_point(point, 3000, RngStream(84, 0));
  CHECK(*r.mc_estimate == r.inputs.p_cov);
  CHECK(r.bound_value <= *r.mc_estimate);
  CHECK_FALSE(*r.violated);
}

TEST_CASE("vacuous grid points are never violations") {
  // Huge noise against a small gap: the misrank term exceeds 1.
  const GapGridPoint point{0.5, 0.05, 32};
  const auto r = verify_accuracy_point(point, 500, RngStream(85, 0));
  CHECK(r.vacuous);
  CHECK_FALSE(*r.violated);
}

TEST_CASE("a small accuracy grid holds and is independent of the thread count") {
  const std::vector<GapGridPoint> grid{{0.05, 0.2, 2}, {0.1, 0.4, 8}, {0.02, 0.2, 32}};
  const auto a = verify_accuracy_bound(grid, 1000, RngStream(86, 0), 1);
  const auto b = verify_accuracy_bound(grid, 1000, RngStream(86, 0), 3);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK_FALSE(*a[i].violated);
    CHECK(a[i].mc_estimate == b[i].mc_estimate);
    CHECK(a[i].bound_value == b[i].bound_value);
  }
  std::ostringstream csv;
  write_reports_csv(csv, a);
  CHECK(csv.str().rfind("label,n,delta,kl,epsilon,gamma_gap,N,p_cov,alpha,bound_value,", 0) == 0);
}

TEST_CASE("threshold problem population risk") {
  const ThresholdProblem p;
  CHECK(p.threshold(31) == doctest::Approx(31.5 / 64));
  CHECK(p.population_risk(31) == doctest::Approx(0.1 + 0.8 * (0.5 - 31.5 / 64)));
}

TEST_CASE("pac-bayes verifier: single hypothesis and the acceptance setting") {
  ThresholdProblem one;
  one.class_size = 1;
  const auto a = verify_pac_bayes(one, 200, 0.1, 500, RngStream(87, 0));
  CHECK(a.report.inputs.kl == 0.0);
  CHECK_FALSE(*a.report.violated);

  const auto b = verify_pac_bayes(ThresholdProblem{}, 200, 0.1, 300, RngStream(88, 0));
  CHECK(b.report.bound_value == doctest::Approx(dirac_bound(1.0 / 64, 200, 0.1)));
  CHECK_FALSE(*b.report.violated);
}

TEST_CASE("doubling n shrinks the mean generalization error") {
  const ThresholdProblem p;
  const auto small = verify_pac_bayes(p, 100, 0.1, 400, RngStream(89, 0));
  const auto large = verify_pac_bayes(p, 200, 0.1, 400, RngStream(89, 0));
  CHECK(large.mean_gen_error < small.mean_gen_error);
}
