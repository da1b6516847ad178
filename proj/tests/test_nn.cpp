#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "catsearch/errors.hpp"
#include "catsearch/nn.hpp"
#include "gradcheck.hpp"

using namespace catsearch;
using namespace catsearch::nn;

namespace {

std::vector<double> random_vector(std::size_t n, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

Mlp random_net(std::vector<std::size_t> sizes, Head head, RngStream& rng) {
  auto net = Mlp::glorot(std::move(sizes), head, rng);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto [offset, length] = net.layer_block(l);
    const auto nb = net.biases(l).size();
    auto p = net.mutable_params();
    for (std::size_t i = offset + length - nb; i < offset + length; ++i) p[i] = rng.uniform(-0.2, 0.2);
  }
  return net;
}

// Independent evaluation straight from weights() and biases().
std::vector<double> reevaluate(const Mlp& net, std::vector<double> a) {
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto w = net.weights(l);
    const auto b = net.biases(l);
    const std::size_t in = a.size();
    std::vector<double> z(b.begin(), b.end());
    for (std::size_t o = 0; o < z.size(); ++o)
      for (std::size_t i = 0; i < in; ++i) z[o] += w[o * in + i] * a[i];
    if (l + 1 < net.num_layers())
      for (auto& v : z) v = v > 0.0 ? v : 0.0;
    a = std::move(z);
  }
  if (net.head() == Head::kSoftmax) {
    double m = a[0];
    for (double v : a) m = std::max(m, v);
    double s = 0.0;
    for (auto& v : a) s += (v = std::exp(v - m));
    for (auto& v : a) v /= s;
  }
  return a;
}

}  // namespace

TEST_CASE("zero network outputs zeros") {
  const Mlp net({3, 5, 2}, Head::kIdentity);
  CHECK(net.predict(std::vector<double>{1, 2, 3}) == std::vector<double>{0, 0});
  CHECK(net.param_count() == 3 * 5 + 5 + 5 * 2 + 2);
  CHECK_THROWS_AS(net.predict(std::vector<double>{1, 2}), ShapeMismatch);
  CHECK_THROWS_AS(Mlp({3}, Head::kIdentity), ShapeMismatch);
}

TEST_CASE("softmax of equal logits is uniform") {
  const Mlp net({2, 2}, Head::kSoftmax);
  const auto p = net.predict(std::vector<double>{0.3, -1.0});
  CHECK(p[0] == 0.5);
  CHECK(p[1] == 0.5);
}

TEST_CASE("forward matches an independent re-evaluation") {
  RngStream rng(51, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const auto head = rep % 2 ? Head::kSoftmax : Head::kIdentity;
    const auto net = random_net({6, 9, 7, 4}, head, rng);
    const auto x = random_vector(6, rng);
    const auto got = net.predict(x);
    const auto want = reevaluate(net, x);
    for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(std::abs(got[i] - want[i]) <= 1e-12);
    if (head == Head::kSoftmax) {
      REQUIRE(std::abs(std::accumulate(got.begin(), got.end(), 0.0) - 1.0) <= 1e-12);
      for (double p : got) REQUIRE(p > 0.0);
    }
  }
}

TEST_CASE("linear net gradient equals the least-squares closed form") {
  RngStream rng(52, 0);
  const auto net = random_net({4, 3}, Head::kIdentity, rng);
  const auto x = random_vector(4, rng);
  const auto y = random_vector(3, rng);
  const auto cache = net.forward(x);
  std::vector<double> r(3);
  for (std::size_t o = 0; o < 3; ++o) r[o] = cache.output[o] - y[o];
  const auto g = net.backward(cache, r);
  // dL/dW = r x^T, dL/db = r.
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(g[o * 4 + i] == doctest::Approx(r[o] * x[i]).epsilon(1e-14));
    REQUIRE(g[12 + o] == r[o]);
  }
}

TEST_CASE("analytic gradients agree with central differences") {
  RngStream rng(53, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const auto head = rep % 2 ? Head::kSoftmax : Head::kIdentity;
    const auto net = random_net({5, 12, 4}, head, rng);
    const auto r = gradcheck::check(net, random_vector(5, rng), random_vector(4, rng));
    REQUIRE(r.checked > 0);
    REQUIRE(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("a dead ReLU unit passes no gradient") {
  Mlp net({1, 2, 1}, Head::kIdentity);
  auto p = net.mutable_params();
  // Layer 0: W = [1, -1]^T, b = [0, 0]; layer 1: W = [1, 1], b = 0.
  p[0] = 1.0;
  p[1] = -1.0;
  p[4] = 1.0;
  p[5] = 1.0;
  const std::vector<double> x{2.0};  // unit 1 pre-activation is -2
  const auto cache = net.forward(x);
  const std::vector<double> one{1.0};
  const auto g = net.backward(cache, one);
  CHECK(g[1] == 0.0);  // weight into the dead unit
  CHECK(g[3] == 0.0);  // its bias
  CHECK(g[5] == 0.0);  // its outgoing weight sees a zero activation
  CHECK(g[0] == 2.0);
}

TEST_CASE("backward rejects a stale cache") {
  RngStream rng(54, 0);
  auto net = random_net({2, 3, 1}, Head::kIdentity, rng);
  const auto cache = net.forward(std::vector<double>{0.1, 0.2});
  net.mutable_params()[0] += 1.0;
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(net.backward(cache, one), StaleCache);
  const auto other = random_net({2, 3, 1}, Head::kIdentity, rng);
  CHECK_THROWS_AS(other.backward(net.forward(std::vector<double>{0.1, 0.2}), one), StaleCache);
}

TEST_CASE("adam: zero gradient is a no-op; the first step has size lr") {
  std::vector<double> params{1.0, -2.0, 3.0};
  AdamState s(3, 1e-3);
  adam_step(params, std::vector<double>{0.0, 0.0, 0.0}, s);
  CHECK(params == std::vector<double>{1.0, -2.0, 3.0});

  AdamState t(3, 1e-3);
  std::vector<double> q{0.0, 0.0, 0.0};
  adam_step(q, std::vector<double>{0.5, -3.0, 100.0}, t);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  CHECK(q[0] == doctest::Approx(-1e-3 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(1e-3 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
  CHECK(q[2] == doctest::Approx(-1e-3).epsilon(1e-9));
  CHECK(t.step == 1);
}

TEST_CASE("adam rejects bad gradients without touching parameters") {
  std::vector<double> params{1.0, 2.0};
  AdamState s(2, 1e-3);
  CHECK_THROWS_AS(adam_step(params, std::vector<double>{1.0}, s), ShapeMismatch);
  CHECK_THROWS_AS(adam_step(params, std::vector<double>{1.0, std::nan("")}, s), TrainingDiverged);
  CHECK(params == std::vector<double>{1.0, 2.0});
  CHECK(s.step == 0);
}

TEST_CASE("adam minimizes a convex quadratic") {
  // f(x) = 0.5 sum a_i (x_i - c_i)^2
  const std::vector<double> a{1.0, 4.0, 0.5};
  const std::vector<double> c{0.3, -0.2, 0.1};
  std::vector<double> x{1.0, 1.0, -1.0};
  auto f = [&] {
    double t = 0.0;
    for (std::size_t i = 0; i < 3; ++i) t += 0.5 * a[i] * (x[i] - c[i]) * (x[i] - c[i]);
    return t;
  };
  AdamState s(3, 0.05);
  const double initial = f();
  double last = initial;
  // Far from the optimum every coordinate moves about lr toward c, so the
  // first steps decrease f strictly. Adam is not monotone near the optimum.
  int early_decreases = 0;
  for (int step = 0; step < 200; ++step) {
    std::vector<double> g(3);
    for (std::size_t i = 0; i < 3; ++i) g[i] = a[i] * (x[i] - c[i]);
    adam_step(x, g, s);
    const double now = f();
    if (step < 10) early_decreases += now < last;
    last = now;
  }
  CHECK(early_decreases == 10);
  CHECK(last < 1e-3 * initial);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  RngStream rng(55, 0);
  auto net = random_net({4, 6, 3}, Head::kSoftmax, rng);
  AdamState s(net.param_count(), 1e-3);
  adam_step(net, random_vector(net.param_count(), rng), s);
  const auto doc = to_json(net, &s);
  const auto back = mlp_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(back == net);
  const auto opt = adam_from_json(nlohmann::json::parse(doc.dump()));
  REQUIRE(opt.has_value());
  CHECK(opt->m == s.m);
  CHECK(opt->v == s.v);
  CHECK(opt->step == s.step);
  CHECK_FALSE(adam_from_json(to_json(net)).has_value());

  const auto path = std::filesystem::temp_directory_path() / "catsearch_nn_roundtrip.json";
  save_checkpoint(path, net, &s);
  CHECK(load_checkpoint(path) == net);
  std::filesystem::remove(path);

  auto bad = doc;
  bad["format_version"] = 99;
  CHECK_THROWS(mlp_from_json(bad));
  bad = doc;
  bad["layers"][0]["biases"].push_back(0.0);
  CHECK_THROWS(mlp_from_json(bad));
}

TEST_CASE("seeded initialization is deterministic") {
  RngStream a(56, 0);
  RngStream b(56, 0);
  CHECK(Mlp::glorot({10, 128, 36}, Head::kSoftmax, a) == Mlp::glorot({10, 128, 36}, Head::kSoftmax, b));
  RngStream c(56, 0);
  const auto net = Mlp::glorot({10, 128, 36}, Head::kSoftmax, c);
  const double limit = std::sqrt(6.0 / 138.0);
  for (double w : net.weights(0)) REQUIRE(std::abs(w) <= limit);
  for (double b0 : net.biases(0)) REQUIRE(b0 == 0.0);
}
