#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "catsearch/core.hpp"
#include "catsearch/env.hpp"
#include "catsearch/nn.hpp"
#include "catsearch/prm.hpp"
#include "catsearch/search.hpp"

namespace catsearch::cats {

// Controller state layout. Bump kFeatureLayoutVersion whenever it changes;
// checkpoints written under another version are rejected on load.
inline constexpr std::size_t kFeatureWidth = 10;
inline constexpr int kFeatureLayoutVersion = 1;
inline constexpr std::array<const char*, kFeatureWidth> kFeatureNames{
    "candidate_count", "score_max",           "score_mean",          "score_min", "score_std",
    "remaining_budget", "depth_fraction", "prm_total_sparsity", "prm_last_layer_sparsity", "reward_gap"};

using ControlState = std::array<double, kFeatureWidth>;

/// One point of the discrete control grid.
struct ControlAction {
  int extra_samples = 0;  // children per expansion = 1 + extra_samples
  int retain_count = 1;
  int preset = 0;  // index into ActionGrid::presets

  friend bool operator==(const ControlAction&, const ControlAction&) = default;
};

/// Flat action space: index = (extra_idx * |retain| + retain_idx) * |presets| + preset.
struct ActionGrid {
  std::vector<int> extra_samples{0, 2, 4, 8};
  std::vector<int> retain_counts{1, 2, 4};
  std::vector<SamplingParams> presets{{0.5, 0, 1.0}, {1.0, 0, 1.0}, {1.5, 0, 1.0}};

  std::size_t size() const noexcept { return extra_samples.size() * retain_counts.size() * presets.size(); }
  ControlAction decode(std::size_t index) const;
  /// Throws ConfigError if a component is not on the grid.
  std::size_t encode(const ControlAction& action) const;
  int max_extra() const;
  void validate() const;
};

struct CatsWeights {
  double lambda_c = 0.2;
  double lambda_m = 0.5;
  double lambda_r = 0.3;
  double gamma = 0.9;

  void validate() const;
};

struct CatsConfig {
  ActionGrid grid;
  CatsWeights weights;
  int beam_size = 4;   // K
  int max_paths = 32;  // per-question budget, in complete-path equivalents
  std::size_t actor_hidden = 128;
  std::size_t critic_hidden = 256;
  double lr = 1e-3;
  double entropy_coef = 0.0;

  void validate() const;
};

/// Summary of the current candidate set (the beam) plus budget, depth and
/// PRM sparsity. An empty candidate set yields zero score statistics.
ControlState extract_features(std::span<const double> candidate_scores, const BudgetLedger& ledger, int depth,
                              int max_depth, int beam_size, const prm::SparsityStats& prm_stats);

/// -lambda_c C(a) + lambda_m dm + lambda_r max(all), where C(a) is
/// extra_samples over the grid's largest option and
/// dm = max(0, min(retained) - max(discarded)), or 0 when nothing was
/// discarded. Throws EmptyCandidateSet if `retained` is empty.
double step_reward(const ControlAction& action, const ActionGrid& grid, std::span<const double> retained,
                   std::span<const double> discarded, std::span<const double> all_candidates,
                   const CatsWeights& weights);

/// r + gamma v_next (1 - terminal) - v_curr.
double td_error(double reward, double gamma, double v_next, double v_curr, bool terminal);

struct Transition {
  ControlState state{};
  std::size_t action = 0;
  double log_prob = 0.0;
  double reward = 0.0;
  ControlState next_state{};
  bool terminal = false;
};

/// Actor (softmax over the action grid) and critic (scalar value) with their
/// optimizers.
class CatsAgent {
 public:
  CatsAgent() = default;
  CatsAgent(const CatsConfig& config, RngStream& rng);

  std::vector<double> policy(const ControlState& state) const;
  double value(const ControlState& state) const;
  std::size_t greedy_action(const ControlState& state) const;
  /// Samples an action; returns (index, log-probability).
  std::pair<std::size_t, double> sample_action(const ControlState& state, RngStream& rng) const;

  nn::Mlp actor;
  nn::Mlp critic;
  nn::AdamState actor_opt;
  nn::AdamState critic_opt;
};

struct UpdateLosses {
  double td = 0.0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
};

/// One semi-gradient A2C step: the critic descends 0.5 td^2 with the
/// bootstrap target held fixed; the actor ascends log pi(a|s) td with td held
/// fixed. A zero TD error (and no entropy bonus) leaves both nets untouched.
UpdateLosses a2c_update(const Transition& t, CatsAgent& agent, const CatsWeights& weights,
                        double entropy_coef = 0.0);

struct EpisodeLog {
  int episode = 0;
  std::string prm_id;
  double base_quality = 0.0;
  int transitions = 0;
  double total_reward = 0.0;
  double mean_td = 0.0;
  double paths_consumed = 0.0;
  bool correct = false;
};

struct TrainingResult {
  CatsAgent agent;
  std::vector<EpisodeLog> log;
};

/// Beam-style episodes with stochastic actions and an A2C update for every
/// surviving child after each pruning step. PRMs are used round-robin.
TrainingResult train_cats(const env::Policy& policy, const env::TaskDistribution& tasks,
                          std::span<const prm::Prm* const> prms, int episodes, const CatsConfig& config,
                          RngStream rng);

/// Continues training an existing agent.
void continue_training(TrainingResult& result, const env::Policy& policy, const env::TaskDistribution& tasks,
                       std::span<const prm::Prm* const> prms, int episodes, const CatsConfig& config,
                       RngStream rng);

using ActionSelector = std::function<std::size_t(const ControlState&)>;

/// Inference with a frozen controller: greedy actions, completed paths
/// collected into a finished set, beam pruned to K - |finished|, final pick by
/// select_best. Never charges past the ledger; a ledger too small to finish
/// one path yields the best partial path, flagged as truncated.
search::SearchResult cats_infer(const env::SyntheticTask& task, const env::Policy& policy, const prm::Prm& prm,
                                const CatsAgent& agent, const CatsConfig& config, BudgetLedger& ledger);

/// Same procedure with an arbitrary action rule in place of the actor.
search::SearchResult cats_infer_with(const env::SyntheticTask& task, const env::Policy& policy,
                                     const prm::Prm& prm, const ActionSelector& select, const CatsConfig& config,
                                     BudgetLedger& ledger);

// Checkpoint: {"actor": <mlp>, "critic": <mlp>, "metadata": {feature layout,
// action grid, presets, weights, beam size, budget}}.
void save_agent(const std::filesystem::path& path, const CatsAgent& agent, const CatsConfig& config);
/// Throws ConfigError if the stored feature layout version differs.
std::pair<CatsAgent, CatsConfig> load_agent(const std::filesystem::path& path);
nlohmann::json agent_to_json(const CatsAgent& agent, const CatsConfig& config);
std::pair<CatsAgent, CatsConfig> agent_from_json(const nlohmann::json& doc);

}  // namespace catsearch::cats
