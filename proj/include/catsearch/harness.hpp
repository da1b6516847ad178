#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "catsearch/cats.hpp"
#include "catsearch/env.hpp"
#include "catsearch/prm.hpp"
#include "catsearch/remote.hpp"

namespace catsearch::harness {

// ---------------------------------------------------------------------------
// Configuration: one `dotted.key = value` per line, '#' starts a comment.
// The full schema is in docs/config.md.

using ConfigMap = std::map<std::string, std::string>;

/// Throws ConfigError("line N", ...) on malformed lines and on duplicate keys.
ConfigMap parse_config(std::istream& in);
ConfigMap parse_config_file(const std::filesystem::path& path);

struct PrmSpec {
  std::string id;
  std::string kind = "oracle";  // oracle | trained | remote
  double epsilon = 0.1;
  std::optional<std::uint64_t> noise_seed;
  prm::SparsityStats sparsity;
  // trained
  std::size_t train_size = 2000;
  double label_noise = 0.05;
  prm::TrainOptions train;
  // remote
  remote::EndpointConfig endpoint;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  int trials = 100;
  int jobs = 1;
  env::TaskDistribution tasks;
  std::vector<PrmSpec> prms;
  std::vector<std::string> strategies{"best_of_n"};  // and beam_search, majority_vote, cats
  std::vector<int> budgets{4, 8, 16, 32, 64, 128, 256};
  int max_candidates = 256;
  int beam_width = 4;
  SamplingParams sampling;
  cats::CatsConfig cats;
  int cats_episodes = 1000;
  std::vector<int> cats_budgets;  // per-question path caps for CATS rows; empty means {cats.max_paths}
  std::optional<std::filesystem::path> cats_checkpoint;
  std::optional<remote::EndpointConfig> policy_endpoint;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Unknown keys are rejected so typos cannot silently fall back to defaults.
ExperimentConfig experiment_from_map(const ConfigMap& map);
ExperimentConfig load_experiment(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Results

struct ResultRow {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string strategy;
  std::string prm;
  int N = 0;
  int trials = 0;
  double accuracy = 0.0;
  double mean_paths = 0.0;
  double mean_wall_ms = 0.0;
};

/// Instantiated PRMs plus the policy the experiment runs against.
struct Backends {
  std::unique_ptr<env::Policy> policy;
  std::vector<std::unique_ptr<prm::Prm>> prms;

  std::vector<const prm::Prm*> prm_pointers() const;
};

Backends make_backends(const ExperimentConfig& config);

/// The `trials` evaluation tasks shared by every cell.
std::vector<env::SyntheticTask> evaluation_tasks(const ExperimentConfig& config);

/// Trains on every PRM jointly (or loads cats_checkpoint when set).
cats::TrainingResult prepare_cats(const ExperimentConfig& config, const Backends& backends);

/// One row per (strategy, PRM, N) cell, in config order. Every cell runs the
/// same evaluation tasks; trials may run on config.jobs threads without
/// changing any column except mean_wall_ms.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config);

/// Same, reusing prepared backends and an already trained controller.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config, const Backends& backends,
                                      const cats::CatsAgent* agent);

inline constexpr const char* kCsvHeader =
    "experiment,seed,strategy,prm,N,trials,accuracy,mean_paths,mean_wall_ms";

/// Fixed column order, reals with 6 decimals. mean_wall_ms is last so that
/// golden comparisons can drop it.
void write_csv(std::ostream& out, std::span<const ResultRow> rows, bool include_wall_time = true);
std::vector<ResultRow> read_csv(std::istream& in);

// ---------------------------------------------------------------------------
// Plot data (format in docs/plot_data.md)

struct PlotPoint {
  std::string strategy;
  std::string prm;
  int N = 0;
  double accuracy = 0.0;
  double mean_paths = 0.0;
};

/// One series per (strategy, PRM) in order of first appearance, points sorted
/// by N. Throws EmptyResults on empty input.
void emit_plot_data(std::ostream& out, std::span<const ResultRow> rows);
std::vector<PlotPoint> parse_plot_data(std::istream& in);

// ---------------------------------------------------------------------------
// Equal-budget comparison

struct BudgetComparison {
  double cats_accuracy = 0.0;
  double cats_paths = 0.0;
  std::string best_baseline;  // "strategy@N", empty when none is eligible
  double baseline_accuracy = 0.0;
  double baseline_paths = 0.0;
  bool cats_wins_or_ties = false;
};

/// Accuracy and consumption are averaged over PRMs per (strategy, N). The CATS
/// cell at `cats_budget` is compared with the most accurate baseline cell
/// whose mean consumption does not exceed CATS's; with no eligible baseline
/// CATS wins by default.
BudgetComparison compare_at_equal_budget(std::span<const ResultRow> rows, int cats_budget);

}  // namespace catsearch::harness
