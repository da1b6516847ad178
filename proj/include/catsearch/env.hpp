#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "catsearch/core.hpp"

namespace catsearch::env {

/// How per-step qualities are drawn.
///  - kContinuous: quality = clamp(base + 0.5 * temperature * v, 0, 1) with v
///    symmetric on [-top_p, top_p], quantized to top_k levels when top_k > 0.
///  - kBernoulli: quality is 1 with probability base_quality, else 0. Sampling
///    parameters are ignored; this is the closed-form oracle configuration.
enum class StepModel { kContinuous, kBernoulli };

/// A question whose ground-truth reward R* is known by construction.
/// R*(path) is the mean step quality, and a finalized path carries the
/// correct answer exactly when R* >= tau.
struct SyntheticTask {
  std::string question_id = "q0";
  double tau = 0.7;
  double base_quality = 0.5;
  int depth = 1;
  int answer_space = 4;
  AnswerId correct_answer = 0;
  StepModel model = StepModel::kContinuous;
  /// Seeds the task's tree of possible continuations.
  std::uint64_t tree_seed = 0;

  void validate() const;
};

/// Empty, non-terminal path rooted at the task.
ReasoningPath root_path(const SyntheticTask& task);

/// Stream for the `child`-th continuation of `prefix`. Every strategy that
/// asks for the same child of the same prefix sees the same step, which makes
/// strategies comparable draw-for-draw.
RngStream child_stream(const SyntheticTask& task, const ReasoningPath& prefix, std::uint64_t child);

/// Draws one step. Throws PathTerminal when the prefix cannot be extended.
Step sample_step(const SyntheticTask& task, const ReasoningPath& prefix, const SamplingParams& params,
                 RngStream rng);

/// Mean step quality; base_quality for the empty path.
double true_reward(const SyntheticTask& task, const ReasoningPath& path);

/// Attaches the answer. Throws PathNotComplete unless the path has full depth.
ReasoningPath finalize(const SyntheticTask& task, ReasoningPath path);

/// Monte Carlo estimate of Pr[some of N sampled full paths has R* >= tau].
double coverage_probability(const SyntheticTask& task, const SamplingParams& params, int n, int trials,
                            RngStream rng);

/// Source of reasoning steps. The synthetic environment is one implementation;
/// the HTTP adapter is another.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Step sample_step(const SyntheticTask& task, const ReasoningPath& prefix,
                           const SamplingParams& params, RngStream rng) const = 0;
  virtual ReasoningPath finalize(const SyntheticTask& task, ReasoningPath path) const = 0;
  /// Whether true_reward() is meaningful for paths from this policy.
  virtual bool has_ground_truth() const { return false; }
};

class SyntheticPolicy final : public Policy {
 public:
  Step sample_step(const SyntheticTask& task, const ReasoningPath& prefix, const SamplingParams& params,
                   RngStream rng) const override {
    return env::sample_step(task, prefix, params, rng);
  }
  ReasoningPath finalize(const SyntheticTask& task, ReasoningPath path) const override {
    return env::finalize(task, std::move(path));
  }
  bool has_ground_truth() const override { return true; }
};

/// Step quality is a fixed function of the sampling preset: a step drawn
/// with presets[i] has quality qualities[i], any other preset gets
/// `fallback`. Used to build environments whose best preset is known.
class PresetQualityPolicy final : public Policy {
 public:
  PresetQualityPolicy(std::vector<SamplingParams> presets, std::vector<double> qualities, double fallback = 0.0);

  Step sample_step(const SyntheticTask& task, const ReasoningPath& prefix, const SamplingParams& params,
                   RngStream rng) const override;
  ReasoningPath finalize(const SyntheticTask& task, ReasoningPath path) const override {
    return env::finalize(task, std::move(path));
  }
  bool has_ground_truth() const override { return true; }

 private:
  std::vector<SamplingParams> presets_;
  std::vector<double> qualities_;
  double fallback_;
};

/// prefix + one freshly sampled step (the `child`-th continuation).
ReasoningPath sample_child(const Policy& policy, const SyntheticTask& task, const ReasoningPath& prefix,
                           std::uint64_t child, const SamplingParams& params);

/// Full-depth, finalized path whose first step is root child `first_child`
/// and whose later steps are always child 0.
ReasoningPath sample_full_path(const Policy& policy, const SyntheticTask& task, std::uint64_t first_child,
                               const SamplingParams& params);

struct DifficultyBand {
  double weight = 1.0;
  double lo = 0.5;
  double hi = 0.5;
};

/// Mixture of difficulty bands sharing tau, depth and answer space.
struct TaskDistribution {
  std::vector<DifficultyBand> bands{{1.0, 0.5, 0.5}};
  double tau = 0.7;
  int depth = 1;
  int answer_space = 4;
  StepModel model = StepModel::kContinuous;

  void validate() const;
  SyntheticTask sample(RngStream& rng, std::string question_id) const;
};

}  // namespace catsearch::env
