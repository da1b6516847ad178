#include "catsearch/prm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace catsearch::prm {
namespace {

constexpr double kClamp = 1e-7;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

NoisyOraclePrm::NoisyOraclePrm(double epsilon, std::uint64_t noise_seed, SparsityStats stats, std::string id)
    : epsilon_(epsilon), noise_seed_(noise_seed), stats_(stats), id_(std::move(id)) {
  if (!(epsilon_ >= 0.0 && epsilon_ <= 1.0)) throw ConfigError("prm.epsilon", "must lie in [0, 1]");
  if (id_.empty()) {
    std::ostringstream s;
    s << "oracle-eps" << epsilon_;
    id_ = s.str();
  }
}

double NoisyOraclePrm::raw_deviation(const ReasoningPath& prefix) const noexcept {
  RngStream rng(noise_seed_, prefix.key());
  return epsilon_ * (2.0 * rng.uniform() - 1.0);
}

double NoisyOraclePrm::score(const env::SyntheticTask& task, const ReasoningPath& prefix) const {
  return std::clamp(env::true_reward(task, prefix) + raw_deviation(prefix), 0.0, 1.0);
}

std::size_t PrmTrainingSet::feature_width() const { return items.empty() ? 0 : items.front().features.size(); }

void PrmTrainingSet::validate() const {
  if (items.size() < 2) throw InvalidSampleSize("training set needs at least two items");
  for (const auto& it : items) {
    if (it.label != 0 && it.label != 1) throw ConfigError("labels", "must be 0 or 1");
    if (it.features.size() != feature_width()) throw ShapeMismatch("ragged feature vectors");
  }
}

std::vector<double> prefix_features(const env::SyntheticTask& task, const ReasoningPath& prefix) {
  if (prefix.steps.empty()) return {task.base_quality, task.base_quality, task.base_quality, 0.0};
  double lowest = 1.0;
  for (const auto& s : prefix.steps) lowest = std::min(lowest, s.quality);
  return {env::true_reward(task, prefix), prefix.steps.back().quality, lowest,
          static_cast<double>(prefix.length()) / task.depth};
}

PrmTrainingSet make_synthetic_dataset(const env::TaskDistribution& dist, std::size_t n, double label_noise,
                                      RngStream& rng) {
  env::SyntheticPolicy policy;
  const SamplingParams params;
  PrmTrainingSet set;
  set.items.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto task = dist.sample(rng, "train-" + std::to_string(i));
    const auto length = 1 + rng.below(static_cast<std::uint64_t>(task.depth));
    ReasoningPath path = env::root_path(task);
    for (std::uint64_t d = 0; d < length; ++d) path = env::sample_child(policy, task, path, 0, params);
    int label = env::true_reward(task, path) >= task.tau ? 1 : 0;
    if (rng.bernoulli(label_noise)) label = 1 - label;
    set.items.push_back({task.question_id, prefix_features(task, path), label});
  }
  return set;
}

double prm_loss(std::span<const double> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ShapeMismatch("prm_loss: length mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double p = std::clamp(predictions[i], kClamp, 1.0 - kClamp);
    loss -= labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return loss;
}

TrainedPrm::TrainedPrm(nn::Mlp net, std::string id) : net_(std::move(net)), id_(std::move(id)) {
  if (net_.output_size() != 1) throw ShapeMismatch("trained PRM needs a single output logit");
}

double TrainedPrm::predict(std::span<const double> features) const { return sigmoid(net_.predict(features)[0]); }

double TrainedPrm::score(const env::SyntheticTask& task, const ReasoningPath& prefix) const {
  return predict(prefix_features(task, prefix));
}

SparsityStats TrainedPrm::sparsity_stats() const { return prm::sparsity_stats(net_); }

TrainedPrm train_prm(const PrmTrainingSet& train, const TrainOptions& options, RngStream& rng) {
  train.validate();
  std::vector<std::size_t> sizes{train.feature_width()};
  sizes.insert(sizes.end(), options.hidden.begin(), options.hidden.end());
  sizes.push_back(1);
  auto net = nn::Mlp::glorot(sizes, nn::Head::kIdentity, rng);
  nn::AdamState adam(net.param_count(), options.lr);

  std::vector<int> labels;
  for (const auto& it : train.items) labels.push_back(it.label);
  const auto n = static_cast<double>(train.size());

  auto mean_loss = [&](const nn::Mlp& m) {
    std::vector<double> preds;
    for (const auto& it : train.items) preds.push_back(sigmoid(m.predict(it.features)[0]));
    return prm_loss(preds, labels) / n;
  };

  const double initial = mean_loss(net);
  for (int step = 0; step < options.steps; ++step) {
    std::vector<double> grad(net.param_count(), 0.0);
    for (const auto& it : train.items) {
      const auto cache = net.forward(it.features);
      // d/dz of the clamped-free BCE is sigmoid(z) - y.
      const double g = (sigmoid(cache.output[0]) - it.label) / n;
      const auto local = net.backward(cache, std::span<const double>(&g, 1));
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += local[i];
    }
    nn::adam_step(net, grad, adam);
  }
  const double final_loss = mean_loss(net);
  if (!std::isfinite(final_loss)) throw TrainingDiverged("prm training loss is not finite");

  TrainedPrm prm(std::move(net));
  prm.initial_train_loss = initial;
  prm.final_train_loss = final_loss;
  return prm;
}

double sparsity(std::span<const double> weights, double threshold) {
  if (weights.empty()) throw EmptyModel();
  const auto small = std::count_if(weights.begin(), weights.end(),
                                   [&](double w) { return std::abs(w) < threshold; });
  return static_cast<double>(small) / static_cast<double>(weights.size());
}

SparsityStats sparsity_stats(const nn::Mlp& net, double threshold) {
  if (net.param_count() == 0) throw EmptyModel();
  const auto [offset, length] = net.layer_block(net.num_layers() - 1);
  return {net.param_count(), sparsity(net.params(), threshold),
          sparsity(net.params().subspan(offset, length), threshold)};
}

double sparsity_bound(std::size_t nnz, std::size_t d, std::size_t n, double delta, double c) {
  if (n < 2) throw InvalidSampleSize();
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta", "must lie in (0, 1]");
  if (d < 1) throw ConfigError("d", "must be positive");
  const double numer = c * static_cast<double>(nnz) * std::log(static_cast<double>(d)) +
                       std::log(static_cast<double>(n) / delta);
  return std::sqrt(numer / (2.0 * (static_cast<double>(n) - 1.0)));
}

double empirical_gen_error(const Predictor& prm, const PrmTrainingSet& train, const PrmTrainingSet& test) {
  if (train.items.empty() || test.items.empty()) throw InvalidSampleSize("empty evaluation set");
  auto mean_abs = [&](const PrmTrainingSet& set) {
    double total = 0.0;
    for (const auto& it : set.items) total += std::abs(prm(it.features) - it.label);
    return total / static_cast<double>(set.size());
  };
  return mean_abs(test) - mean_abs(train);
}

std::vector<SparsityRecord> load_sparsity_table(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw Error("cannot open sparsity table " + csv.string());
  std::vector<SparsityRecord> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::stringstream ss(line);
    SparsityRecord r;
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5) throw ConfigError("sparsity table", "expected 5 columns: " + line);
    r.name = fields[0];
    r.params_billions = std::stod(fields[1]);
    r.total_sparsity = std::stod(fields[2]);
    r.last_layer_sparsity = std::stod(fields[3]);
    r.test_error = std::stod(fields[4]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<double> mid_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i + j) / 2.0) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ShapeMismatch("spearman: need two equal-length series");
  const auto rx = mid_ranks(x);
  const auto ry = mid_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

double spearman_rho_classic(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ShapeMismatch("spearman: need two equal-length series");
  const auto rx = mid_ranks(x);
  const auto ry = mid_ranks(y);
  double d2 = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
  const double n = static_cast<double>(x.size());
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

}  // namespace catsearch::prm
