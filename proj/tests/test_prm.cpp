#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "catsearch/prm.hpp"

using namespace catsearch;
using namespace catsearch::prm;

namespace {

env::SyntheticTask make_task(double base, int depth, std::uint64_t seed) {
  env::SyntheticTask t;
  t.base_quality = base;
  t.depth = depth;
  t.tree_seed = seed;
  return t;
}

PrmTrainingSet separable_set(std::size_t n, RngStream& rng) {
  PrmTrainingSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    const int label = a + 0.5 * b > 0.0 ? 1 : 0;
    s.items.push_back({"q", {a, b}, label});
  }
  return s;
}

}  // namespace

TEST_CASE("prm_loss at the symmetric point is ln 2") {
  const std::vector<double> p{0.5};
  const std::vector<int> y{1};
  CHECK(prm_loss(p, y) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("prm_loss of a perfect fit is near zero") {
  const std::vector<double> p{1.0, 0.0, 1.0};
  const std::vector<int> y{1, 0, 1};
  CHECK(prm_loss(p, y) <= 3e-6);
}

TEST_CASE("prm_loss matches term-by-term summation") {
  RngStream rng(31, 0);
  std::vector<double> p(200);
  std::vector<int> y(200);
  double expected = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = rng.uniform(0.01, 0.99);
    y[i] = static_cast<int>(rng.below(2));
    expected += -(y[i] * std::log(p[i]) + (1 - y[i]) * std::log(1.0 - p[i]));
  }
  CHECK(std::abs(prm_loss(p, y) - expected) < 1e-12);
  CHECK_THROWS_AS(prm_loss(p, std::vector<int>(3)), ShapeMismatch);
}

TEST_CASE("sparsity counts magnitudes below the threshold") {
  const std::vector<double> w{1e-5, 0.5, -2e-5, 0.3};
  CHECK(sparsity(w) == 0.5);
  CHECK(sparsity(std::vector<double>(7, 0.0)) == 1.0);
  CHECK_THROWS_AS(sparsity(std::vector<double>{}), EmptyModel);
}

TEST_CASE("sparsity is permutation-invariant but scale-sensitive") {
  RngStream rng(32, 0);
  std::vector<double> w(500);
  for (auto& x : w) x = rng.uniform(-3e-4, 3e-4);
  const double s = sparsity(w);
  std::shuffle(w.begin(), w.end(), rng);
  CHECK(sparsity(w) == s);
  for (auto& x : w) x *= 100.0;
  CHECK(sparsity(w) < s);
}

TEST_CASE("sparsity_bound closed forms") {
  // Independent evaluation of sqrt((c nnz ln d + ln(n / delta)) / (2 (n - 1))).
  const double zero = std::sqrt(std::log(101 / 0.01) / 200.0);
  CHECK(zero == doctest::Approx(0.21471).epsilon(1e-4));
  CHECK(std::abs(sparsity_bound(0, 1000, 101, 0.01, 3.0) - zero) < 1e-12);
  CHECK(std::abs(sparsity_bound(0, 1000, 101, 0.01, 3.0) - 0.21471) < 1e-4);

  const double dense = std::sqrt((100 * std::log(1000.0) + std::log(10001 / 0.01)) / 20000.0);
  CHECK(std::abs(sparsity_bound(100, 1000, 10001, 0.01, 1.0) - dense) < 1e-12);
  CHECK(std::abs(sparsity_bound(100, 1000, 10001, 0.01, 1.0) - 0.18770) < 1e-4);

  CHECK_THROWS_AS(sparsity_bound(0, 10, 1, 0.1, 1.0), InvalidSampleSize);
}

TEST_CASE("sparsity_bound is non-decreasing in nnz") {
  RngStream rng(33, 0);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t d = 1 + rng.below(5000);
    const std::size_t n = 2 + rng.below(10000);
    const double delta = rng.uniform(0.001, 1.0);
    const double c = rng.uniform(0.1, 4.0);
    const std::size_t nnz = rng.below(1000);
    REQUIRE(sparsity_bound(nnz, d, n, delta, c) <= sparsity_bound(nnz + 1 + rng.below(50), d, n, delta, c));
  }
}

TEST_CASE("noisy oracle stays within epsilon and is mean-zero") {
  const double eps = 0.1;
  const NoisyOraclePrm prm(eps, 99);
  const env::SyntheticPolicy policy;
  double max_dev = 0.0;
  double sum = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    // base 0.5, temperature 0.5: R* stays inside [0.25, 0.75], so clamping never applies.
    const auto task = make_task(0.5, 2, static_cast<std::uint64_t>(i));
    const auto path = env::sample_full_path(policy, task, 0, SamplingParams{0.5, 0, 1.0});
    const double dev = prm.score(task, path) - env::true_reward(task, path);
    max_dev = std::max(max_dev, std::abs(dev));
    sum += prm.raw_deviation(path);
    REQUIRE(prm.score(task, path) == prm.score(task, path));
  }
  CHECK(max_dev <= eps);
  CHECK(std::abs(sum / n) <= 3.0 * eps / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("noisy oracle with epsilon 0 is the ground truth; out-of-range epsilon is rejected") {
  const NoisyOraclePrm prm(0.0, 1);
  const auto task = make_task(0.3, 1, 5);
  const auto path = env::sample_full_path(env::SyntheticPolicy{}, task, 0, {});
  CHECK(prm.score(task, path) == env::true_reward(task, path));
  CHECK_THROWS_AS(NoisyOraclePrm(-0.1, 1), ConfigError);
  CHECK(NoisyOraclePrm(0.03, 1, {10, 0.029, 0.0196}, "sharp").sparsity_stats().total_sparsity == 0.029);
}

TEST_CASE("train_prm fits separable data") {
  RngStream data_rng(34, 0);
  const auto train = separable_set(400, data_rng);
  RngStream rng(35, 0);
  const auto prm = train_prm(train, TrainOptions{{16}, 400, 0.02}, rng);
  int correct = 0;
  for (const auto& it : train.items) correct += (prm.predict(it.features) >= 0.5) == (it.label == 1);
  CHECK(correct / 400.0 >= 0.95);
  CHECK(prm.final_train_loss < prm.initial_train_loss);
}

TEST_CASE("train_prm with zero steps returns the initialization; seeds reproduce") {
  RngStream data_rng(36, 0);
  const auto train = separable_set(50, data_rng);
  RngStream a(37, 0);
  RngStream init_rng(37, 0);
  const auto untouched = train_prm(train, TrainOptions{{8}, 0, 0.01}, a);
  const auto init = nn::Mlp::glorot({2, 8, 1}, nn::Head::kIdentity, init_rng);
  CHECK(untouched.net() == init);

  RngStream b(38, 0);
  RngStream c(38, 0);
  CHECK(train_prm(train, TrainOptions{{8}, 30, 0.01}, b).net() == train_prm(train, TrainOptions{{8}, 30, 0.01}, c).net());

  PrmTrainingSet tiny;
  tiny.items.push_back({"q", {0.0, 0.0}, 1});
  CHECK_THROWS_AS(train_prm(tiny, {}, b), InvalidSampleSize);
}

TEST_CASE("synthetic dataset labels follow tau") {
  env::TaskDistribution dist;
  dist.bands = {{0.5, 0.2, 0.4}, {0.5, 0.8, 1.0}};
  dist.depth = 3;
  RngStream rng(39, 0);
  const auto set = make_synthetic_dataset(dist, 500, 0.0, rng);
  CHECK(set.size() == 500);
  CHECK(set.feature_width() == kPrefixFeatureWidth);
  for (const auto& it : set.items) REQUIRE(it.label == (it.features[0] >= dist.tau ? 1 : 0));
}

TEST_CASE("empirical generalization error") {
  RngStream rng(40, 0);
  const auto train = separable_set(200, rng);
  const auto test = separable_set(200, rng);
  const Predictor half = [](std::span<const double>) { return 0.5; };
  CHECK(empirical_gen_error(half, train, train) == 0.0);
  CHECK(std::abs(empirical_gen_error(half, train, test)) < 1e-12);  // |0.5 - y| is 0.5 for every item

  // A lookup-table PRM memorizes train, so its gen error is exactly its test loss.
  const Predictor memo = [&](std::span<const double> f) {
    for (const auto& it : train.items)
      if (it.features[0] == f[0] && it.features[1] == f[1]) return static_cast<double>(it.label);
    return 0.3;
  };
  double test_loss = 0.0;
  for (const auto& it : test.items) test_loss += std::abs(memo(it.features) - it.label);
  test_loss /= static_cast<double>(test.size());
  CHECK(empirical_gen_error(memo, train, test) == doctest::Approx(test_loss).epsilon(1e-15));
}

TEST_CASE("sparsity table fixture and rank correlation") {
  const auto rows = load_sparsity_table(CATSEARCH_SOURCE_DIR "/data/prm_sparsity_table.csv");
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].name == "Math-Shepherd-PRM-7B");
  CHECK(rows[0].total_sparsity == 0.0290);
  CHECK(rows[0].last_layer_sparsity == 0.0196);
  CHECK(rows[0].test_error == 2.78);
  CHECK(rows[3].params_billions == 1.54);

  std::vector<double> total, error;
  for (const auto& r : rows) {
    total.push_back(r.total_sparsity);
    error.push_back(r.test_error);
  }
  // Hand-ranked: total {5, 3.5, 3.5, 1, 2}, error {1, 3.5, 3.5, 5, 2}; sum d^2 = 32.
  CHECK(mid_ranks(total) == std::vector<double>{5, 3.5, 3.5, 1, 2});
  CHECK(mid_ranks(error) == std::vector<double>{1, 3.5, 3.5, 5, 2});
  const double classic = 1.0 - 6.0 * 32.0 / (5.0 * 24.0);
  CHECK(spearman_rho_classic(total, error) == doctest::Approx(classic).epsilon(1e-12));
  CHECK(spearman_rho_classic(total, error) == doctest::Approx(-0.6).epsilon(1e-12));
  // Pearson on mid-ranks differs under ties: -6.5 / 9.5.
  CHECK(spearman_rho(total, error) == doctest::Approx(-6.5 / 9.5).epsilon(1e-12));
  CHECK(spearman_rho(total, error) <= -0.5);
}

TEST_CASE("both rank correlations agree without ties") {
  RngStream rng(41, 0);
  std::vector<double> x(30), y(30);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.uniform();
    y[i] = x[i] + rng.uniform(-0.3, 0.3);
  }
  CHECK(spearman_rho(x, y) == doctest::Approx(spearman_rho_classic(x, y)).epsilon(1e-12));
}
