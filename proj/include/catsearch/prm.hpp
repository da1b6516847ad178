#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "catsearch/env.hpp"
#include "catsearch/nn.hpp"

namespace catsearch::prm {

struct SparsityStats {
  std::size_t param_count = 1;
  double total_sparsity = 0.0;
  double last_layer_sparsity = 0.0;
};

/// Process reward model: maps (question, reasoning prefix) to [0, 1].
class Prm {
 public:
  virtual ~Prm() = default;
  virtual double score(const env::SyntheticTask& task, const ReasoningPath& prefix) const = 0;
  virtual SparsityStats sparsity_stats() const = 0;
  virtual std::string id() const = 0;
};

/// Ground truth plus bounded noise. The deviation of each path is uniform on
/// [-epsilon, epsilon], independent across paths, and a pure function of
/// (noise_seed, path key), so re-scoring a path returns the same value and
/// concurrent readers need no locking. Scores are clamped into [0, 1], which
/// only bites when R* is within epsilon of the boundary.
class NoisyOraclePrm final : public Prm {
 public:
  NoisyOraclePrm(double epsilon, std::uint64_t noise_seed, SparsityStats stats = {}, std::string id = {});

  double score(const env::SyntheticTask& task, const ReasoningPath& prefix) const override;
  SparsityStats sparsity_stats() const override { return stats_; }
  std::string id() const override { return id_; }

  double epsilon() const noexcept { return epsilon_; }
  /// Deviation before clamping.
  double raw_deviation(const ReasoningPath& prefix) const noexcept;

 private:
  double epsilon_;
  std::uint64_t noise_seed_;
  SparsityStats stats_;
  std::string id_;
};

// ---------------------------------------------------------------------------
// Trainable PRM

struct LabeledExample {
  std::string question_id;
  std::vector<double> features;
  int label = 0;
};

/// Labelled prefixes. Labels are binary and there must be at least two items.
struct PrmTrainingSet {
  std::vector<LabeledExample> items;

  std::size_t size() const noexcept { return items.size(); }
  std::size_t feature_width() const;
  void validate() const;
};

/// Features a trained PRM sees for a prefix: mean, last and min step quality,
/// and depth fraction.
inline constexpr std::size_t kPrefixFeatureWidth = 4;
std::vector<double> prefix_features(const env::SyntheticTask& task, const ReasoningPath& prefix);

/// Synthetic labelled prefixes drawn from `dist`: label 1 iff the prefix mean
/// quality reaches tau, flipped with probability `label_noise`.
PrmTrainingSet make_synthetic_dataset(const env::TaskDistribution& dist, std::size_t n, double label_noise,
                                      RngStream& rng);

/// Negated log-likelihood of binary labels, summed over items. Predictions
/// are clamped to [1e-7, 1 - 1e-7]. Throws ShapeMismatch on length mismatch.
double prm_loss(std::span<const double> predictions, std::span<const int> labels);

struct TrainOptions {
  std::vector<std::size_t> hidden{16};
  int steps = 500;
  double lr = 1e-2;
};

/// Mlp-backed PRM: sigmoid of a single logit over prefix features.
class TrainedPrm final : public Prm {
 public:
  TrainedPrm(nn::Mlp net, std::string id = "trained");

  double predict(std::span<const double> features) const;
  double score(const env::SyntheticTask& task, const ReasoningPath& prefix) const override;
  SparsityStats sparsity_stats() const override;
  std::string id() const override { return id_; }

  const nn::Mlp& net() const noexcept { return net_; }
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;

 private:
  nn::Mlp net_;
  std::string id_;
};

/// Full-batch Adam on the mean of prm_loss. Throws TrainingDiverged if the
/// loss becomes non-finite.
TrainedPrm train_prm(const PrmTrainingSet& train, const TrainOptions& options, RngStream& rng);

// ---------------------------------------------------------------------------
// Sparsity

/// Fraction of weights with |w| < threshold. Throws EmptyModel on empty input.
double sparsity(std::span<const double> weights, double threshold = 1e-4);

SparsityStats sparsity_stats(const nn::Mlp& net, double threshold = 1e-4);

/// sqrt((c * nnz * ln d + ln(n / delta)) / (2 (n - 1))).
double sparsity_bound(std::size_t nnz, std::size_t d, std::size_t n, double delta, double c);

using Predictor = std::function<double(std::span<const double>)>;

/// Mean |prediction - label| on test minus the same on train.
double empirical_gen_error(const Predictor& prm, const PrmTrainingSet& train, const PrmTrainingSet& test);

// ---------------------------------------------------------------------------
// Reference sparsity table for published PRMs

struct SparsityRecord {
  std::string name;
  double params_billions = 0.0;
  double total_sparsity = 0.0;
  double last_layer_sparsity = 0.0;
  double test_error = 0.0;  // cross-entropy, not the absolute-error loss
};

std::vector<SparsityRecord> load_sparsity_table(const std::filesystem::path& csv);

/// Ranks starting at 1; tied values share the mean of their positions.
std::vector<double> mid_ranks(std::span<const double> values);

/// Pearson correlation of mid-ranks (exact under ties).
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// 1 - 6 sum(d^2) / (n (n^2 - 1)) on mid-ranks. Equals spearman_rho when
/// there are no ties.
double spearman_rho_classic(std::span<const double> x, std::span<const double> y);

}  // namespace catsearch::prm
