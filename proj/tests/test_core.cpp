#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "catsearch/core.hpp"

using namespace catsearch;

namespace {

std::vector<ScoredCandidate> candidates(std::initializer_list<double> scores) {
  std::vector<ScoredCandidate> out;
  for (double s : scores) {
    ScoredCandidate c;
    c.prm_score = s;
    c.candidate_index = out.size();
    out.push_back(c);
  }
  return out;
}

// Plain linear scan; the reference for select_best.
std::size_t argmax_first(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

TEST_CASE("select_best picks the top score") {
  const auto c = candidates({0.2, 0.9, 0.5});
  CHECK(select_best(c).candidate_index == 1);
}

TEST_CASE("select_best breaks ties toward the smaller index") {
  const auto c = candidates({0.7, 0.7});
  CHECK(select_best(c).candidate_index == 0);
}

TEST_CASE("select_best on an empty set throws") {
  std::vector<ScoredCandidate> none;
  CHECK_THROWS_AS(select_best(none), EmptyCandidateSet);
}

TEST_CASE("select_best agrees with a linear scan on random scores") {
  RngStream rng(11, 0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> scores(256);
    for (auto& s : scores) s = static_cast<double>(rng.below(64)) / 64.0;  // coarse, so ties occur
    std::vector<ScoredCandidate> c(scores.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      c[i].prm_score = scores[i];
      c[i].candidate_index = i;
    }
    REQUIRE(select_best(c).candidate_index == argmax_first(scores));
  }
}

TEST_CASE("select_best does not depend on the order candidates are listed in") {
  RngStream rng(12, 0);
  std::vector<ScoredCandidate> c(40);
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i].prm_score = static_cast<double>(rng.below(8));
    c[i].candidate_index = i;
  }
  const auto expected = select_best(c).candidate_index;
  for (int rep = 0; rep < 20; ++rep) {
    std::shuffle(c.begin(), c.end(), rng);
    REQUIRE(select_best(c).candidate_index == expected);
  }
}

TEST_CASE("top_indices keeps the earlier position among ties") {
  const std::vector<double> s{0.5, 0.9, 0.5, 0.9, 0.1};
  CHECK(top_indices(s, 3) == std::vector<std::size_t>{1, 3, 0});
  CHECK(top_indices(s, 10).size() == 5);
  CHECK(top_indices(s, 0).empty());
}

TEST_CASE("charge adds units and rejects overruns") {
  const BudgetLedger fresh(256);
  CHECK(charge(fresh, 4).consumed() == 4);

  const BudgetLedger full(4, 4);
  CHECK_THROWS_AS(charge(full, 1), BudgetExhausted);

  const BudgetLedger almost(10, 6);
  const auto filled = charge(almost, 4);
  CHECK(filled.consumed() == 10);
  CHECK(filled.remaining() == 0);
  CHECK(filled.remaining_fraction() == 0.0);
}

TEST_CASE("try_charge leaves the ledger untouched on failure") {
  BudgetLedger l(5, 3);
  CHECK_FALSE(l.try_charge(3));
  CHECK(l.consumed() == 3);
  CHECK(l.try_charge(2));
  CHECK(l.consumed() == 5);
  CHECK_THROWS(l.try_charge(0));
}

TEST_CASE("consumed is monotone and never exceeds the maximum") {
  RngStream rng(13, 0);
  for (int rep = 0; rep < 100; ++rep) {
    BudgetLedger l(1 + static_cast<std::int64_t>(rng.below(300)));
    std::int64_t last = 0;
    for (int i = 0; i < 50; ++i) {
      l.try_charge(1 + static_cast<std::int64_t>(rng.below(20)));
      REQUIRE(l.consumed() >= last);
      REQUIRE(l.consumed() <= l.max_units());
      last = l.consumed();
    }
  }
}

TEST_CASE("for_paths counts one unit per step") {
  const auto l = BudgetLedger::for_paths(8, 3);
  CHECK(l.max_units() == 24);
  CHECK(l.remaining_fraction() == 1.0);
  CHECK_THROWS_AS(BudgetLedger(0), ConfigError);
  CHECK_THROWS_AS(BudgetLedger(4, 5), ConfigError);
}

TEST_CASE("sampling params validation") {
  CHECK_NOTHROW(SamplingParams{}.validate());
  CHECK_THROWS_AS((SamplingParams{0.0, 0, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((SamplingParams{1.0, -1, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((SamplingParams{1.0, 0, 0.0}.validate()), ConfigError);
  CHECK_THROWS_AS((SamplingParams{1.0, 0, 1.5}.validate()), ConfigError);
}

TEST_CASE("reasoning path invariants") {
  ReasoningPath p;
  p.steps.resize(2);
  CHECK_NOTHROW(p.validate(2));
  CHECK_THROWS(p.validate(1));
  p.terminal = true;
  CHECK_THROWS(p.validate(2));  // terminal without an answer
  p.answer = 3;
  CHECK_NOTHROW(p.validate(2));
}

TEST_CASE("rng streams are reproducible and independent of position") {
  RngStream a(5, 9);
  RngStream b(5, 9);
  for (int i = 0; i < 10; ++i) REQUIRE(a.next() == b.next());
  RngStream c(5, 9);
  CHECK(c.at(3) == RngStream(5, 9).at(3));
  c.next();
  CHECK(c.derive(1).next() == RngStream(5, 9).derive(1).next());
  CHECK(RngStream(5, 9).next() != RngStream(5, 10).next());

  RngStream u(1, 2);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double x = u.uniform();
    REQUIRE((x >= 0.0 && x < 1.0));
    sum += x;
  }
  CHECK(sum / 100000 == doctest::Approx(0.5).epsilon(0.01));
}
