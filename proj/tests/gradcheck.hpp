#pragma once

// Central finite-difference check shared by the nn suite and the acceptance
// binary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "catsearch/nn.hpp"

namespace gradcheck {

struct Result {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a ReLU kink
};

// Sign pattern of every hidden pre-activation.
inline std::vector<bool> relu_pattern(const catsearch::nn::ForwardCache& c) {
  std::vector<bool> out;
  for (std::size_t l = 0; l + 1 < c.pre.size(); ++l)
    for (double z : c.pre[l]) out.push_back(z > 0.0);
  return out;
}

// Scalar test loss: sum_i w_i * out_i (softmax head) or 0.5 |out - w|^2.
inline double loss(const catsearch::nn::Mlp& net, const std::vector<double>& out, const std::vector<double>& w) {
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i)
    total += net.head() == catsearch::nn::Head::kSoftmax ? w[i] * out[i] : 0.5 * (out[i] - w[i]) * (out[i] - w[i]);
  return total;
}

inline std::vector<double> loss_grad(const catsearch::nn::Mlp& net, const std::vector<double>& out,
                                     const std::vector<double>& w) {
  std::vector<double> g(out.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    g[i] = net.head() == catsearch::nn::Head::kSoftmax ? w[i] : out[i] - w[i];
  return g;
}

// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
// cancellation noise on vanishing gradients from dominating.
inline Result check(catsearch::nn::Mlp net, const std::vector<double>& x, const std::vector<double>& w,
                    double h = 1e-5, double floor = 1e-6) {
  const auto base = net.forward(x);
  const auto pattern = relu_pattern(base);
  const auto analytic = net.backward(base, loss_grad(net, base.output, w));

  Result r;
  for (std::size_t i = 0; i < net.param_count(); ++i) {
    const double saved = net.params()[i];
    net.mutable_params()[i] = saved + h;
    const auto plus = net.forward(x);
    net.mutable_params()[i] = saved - h;
    const auto minus = net.forward(x);
    net.mutable_params()[i] = saved;
    if (relu_pattern(plus) != pattern || relu_pattern(minus) != pattern) {
      ++r.skipped;
      continue;
    }
    const double numeric = (loss(net, plus.output, w) - loss(net, minus.output, w)) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic[i] - numeric) / denom);
    ++r.checked;
  }
  return r;
}

}  // namespace gradcheck
