#include "catsearch/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "catsearch/errors.hpp"

namespace catsearch::nn {

std::string to_string(Head head) { return head == Head::kSoftmax ? "softmax" : "identity"; }

Head head_from_string(const std::string& name) {
  if (name == "softmax") return Head::kSoftmax;
  if (name == "identity") return Head::kIdentity;
  throw ConfigError("head", "unknown head '" + name + "'");
}

Mlp::Mlp(std::vector<std::size_t> layer_sizes, Head head) : sizes_(std::move(layer_sizes)), head_(head) {
  if (sizes_.size() < 2) throw ShapeMismatch("mlp needs at least an input and an output layer");
  if (std::find(sizes_.begin(), sizes_.end(), 0U) != sizes_.end())
    throw ShapeMismatch("mlp layer sizes must be positive");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
  offsets_.push_back(total);
  params_.assign(total, 0.0);
}

Mlp Mlp::glorot(std::vector<std::size_t> layer_sizes, Head head, RngStream& rng) {
  Mlp net(std::move(layer_sizes), head);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto fan_in = static_cast<double>(net.sizes_[l]);
    const auto fan_out = static_cast<double>(net.sizes_[l + 1]);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    const std::size_t n = net.sizes_[l] * net.sizes_[l + 1];
    for (std::size_t i = 0; i < n; ++i) net.params_[net.offsets_[l] + i] = rng.uniform(-limit, limit);
  }
  return net;
}

std::span<const double> Mlp::weights(std::size_t layer) const {
  return std::span<const double>(params_).subspan(offsets_.at(layer), sizes_[layer] * sizes_[layer + 1]);
}

std::span<const double> Mlp::biases(std::size_t layer) const {
  return std::span<const double>(params_).subspan(offsets_.at(layer) + sizes_[layer] * sizes_[layer + 1],
                                                  sizes_[layer + 1]);
}

std::pair<std::size_t, std::size_t> Mlp::layer_block(std::size_t layer) const {
  return {offsets_.at(layer), offsets_.at(layer + 1) - offsets_.at(layer)};
}

void softmax_inplace(std::span<double> z) {
  const double peak = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : z) v /= total;
}

ForwardCache Mlp::forward(std::span<const double> x) const {
  if (x.size() != input_size()) throw ShapeMismatch("mlp input size mismatch");
  ForwardCache cache;
  cache.owner = this;
  cache.version = version_;
  cache.inputs.reserve(num_layers());
  cache.pre.reserve(num_layers());
  std::vector<double> a(x.begin(), x.end());
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double* w = params_.data() + offsets_[l];
    const double* b = w + in * out;
    std::vector<double> z(out);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * a[i];
      z[o] = acc;
    }
    cache.inputs.push_back(std::move(a));
    a = z;
    if (l + 1 < num_layers()) {
      for (double& v : a) v = std::max(v, 0.0);
    }
    cache.pre.push_back(std::move(z));
  }
  if (head_ == Head::kSoftmax) softmax_inplace(a);
  cache.output = std::move(a);
  return cache;
}

std::vector<double> Mlp::backward(const ForwardCache& cache, std::span<const double> grad_output) const {
  if (cache.owner != this || cache.version != version_) throw StaleCache();
  if (grad_output.size() != output_size()) throw ShapeMismatch("output gradient size mismatch");

  std::vector<double> dz(grad_output.begin(), grad_output.end());
  if (head_ == Head::kSoftmax) {
    const auto& p = cache.output;
    double dot = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) dot += grad_output[i] * p[i];
    for (std::size_t i = 0; i < p.size(); ++i) dz[i] = p[i] * (grad_output[i] - dot);
  }

  std::vector<double> grads(params_.size(), 0.0);
  for (std::size_t l = num_layers(); l-- > 0;) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const auto& a = cache.inputs[l];
    double* gw = grads.data() + offsets_[l];
    double* gb = gw + in * out;
    for (std::size_t o = 0; o < out; ++o) {
      gb[o] = dz[o];
      if (dz[o] == 0.0) continue;
      double* row = gw + o * in;
      for (std::size_t i = 0; i < in; ++i) row[i] = dz[o] * a[i];
    }
    if (l == 0) break;
    const double* w = params_.data() + offsets_[l];
    const auto& z_prev = cache.pre[l - 1];
    std::vector<double> next(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      if (dz[o] == 0.0) continue;
      const double* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) next[i] += row[i] * dz[o];
    }
    for (std::size_t i = 0; i < in; ++i)
      if (!(z_prev[i] > 0.0)) next[i] = 0.0;
    dz = std::move(next);
  }
  return grads;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeMismatch("adam: parameter, gradient and moment sizes differ");
  for (double g : grads)
    if (!std::isfinite(g)) throw TrainingDiverged("adam: non-finite gradient");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

void adam_step(Mlp& net, std::span<const double> grads, AdamState& state) {
  adam_step(net.mutable_params(), grads, state);
}

nlohmann::json to_json(const Mlp& net, const AdamState* optimizer) {
  nlohmann::json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  doc["layer_sizes"] = net.layer_sizes();
  doc["head"] = to_string(net.head());
  auto layers = nlohmann::json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto w = net.weights(l);
    const auto b = net.biases(l);
    layers.push_back({{"weights", std::vector<double>(w.begin(), w.end())},
                      {"biases", std::vector<double>(b.begin(), b.end())}});
  }
  doc["layers"] = std::move(layers);
  if (optimizer != nullptr) {
    doc["optimizer"] = {{"lr", optimizer->lr},       {"beta1", optimizer->beta1},
                        {"beta2", optimizer->beta2}, {"epsilon", optimizer->epsilon},
                        {"step", optimizer->step},   {"m", optimizer->m},
                        {"v", optimizer->v}};
  }
  return doc;
}

Mlp mlp_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format_version").get<int>() != kCheckpointFormatVersion)
      throw ConfigError("format_version", "unsupported checkpoint version");
    Mlp net(doc.at("layer_sizes").get<std::vector<std::size_t>>(),
            head_from_string(doc.at("head").get<std::string>()));
    const auto& layers = doc.at("layers");
    if (layers.size() != net.num_layers()) throw ShapeMismatch("checkpoint layer count mismatch");
    auto params = net.mutable_params();
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const auto w = layers[l].at("weights").get<std::vector<double>>();
      const auto b = layers[l].at("biases").get<std::vector<double>>();
      const auto [offset, length] = net.layer_block(l);
      if (w.size() + b.size() != length || b.size() != net.layer_sizes()[l + 1])
        throw ShapeMismatch("checkpoint layer shape mismatch");
      std::copy(w.begin(), w.end(), params.begin() + static_cast<std::ptrdiff_t>(offset));
      std::copy(b.begin(), b.end(), params.begin() + static_cast<std::ptrdiff_t>(offset + w.size()));
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint", e.what());
  }
}

std::optional<AdamState> adam_from_json(const nlohmann::json& doc) {
  if (!doc.contains("optimizer")) return std::nullopt;
  const auto& o = doc.at("optimizer");
  AdamState s;
  s.lr = o.at("lr").get<double>();
  s.beta1 = o.at("beta1").get<double>();
  s.beta2 = o.at("beta2").get<double>();
  s.epsilon = o.at("epsilon").get<double>();
  s.step = o.at("step").get<std::int64_t>();
  s.m = o.at("m").get<std::vector<double>>();
  s.v = o.at("v").get<std::vector<double>>();
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const Mlp& net, const AdamState* optimizer) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << to_json(net, optimizer).dump(2) << '\n';
}

Mlp load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  return mlp_from_json(nlohmann::json::parse(in));
}

}  // namespace catsearch::nn
