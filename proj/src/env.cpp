#include "catsearch/env.hpp"

#include <algorithm>
#include <cmath>

namespace catsearch::env {
namespace {

constexpr double kSpreadScale = 0.5;
constexpr std::uint64_t kAnswerSalt = 0x616e73776572ULL;

// Symmetric offset in [-top_p, top_p], optionally snapped to top_k level centers.
double truncated_offset(double u, const SamplingParams& params) {
  double v = (2.0 * u - 1.0) * params.top_p;
  if (params.top_k > 0) {
    const double width = 2.0 * params.top_p / params.top_k;
    const auto level = std::min<long>(params.top_k - 1, static_cast<long>((v + params.top_p) / width));
    v = -params.top_p + (static_cast<double>(level) + 0.5) * width;
  }
  return v;
}

}  // namespace

void SyntheticTask::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("env.tau", "must lie in (0, 1]");
  if (!(base_quality >= 0.0 && base_quality <= 1.0))
    throw ConfigError("env.base_quality", "must lie in [0, 1]");
  if (depth < 1) throw ConfigError("env.depth", "must be at least 1");
  if (answer_space < 2) throw ConfigError("env.answer_space", "must be at least 2");
  if (correct_answer < 0 || correct_answer >= answer_space)
    throw ConfigError("env.correct_answer", "outside the answer space");
}

ReasoningPath root_path(const SyntheticTask& task) {
  ReasoningPath p;
  p.question_id = task.question_id;
  p.root_key = mix64(task.tree_seed, 0x726f6f74ULL);
  return p;
}

RngStream child_stream(const SyntheticTask& task, const ReasoningPath& prefix, std::uint64_t child) {
  return {task.tree_seed, mix64(prefix.key(), child)};
}

Step sample_step(const SyntheticTask& task, const ReasoningPath& prefix, const SamplingParams& params,
                 RngStream rng) {
  if (prefix.terminal || prefix.length() >= static_cast<std::size_t>(task.depth)) throw PathTerminal();
  Step step;
  step.key = rng.next();
  const double u = rng.uniform();
  switch (task.model) {
    case StepModel::kBernoulli:
      step.quality = u < task.base_quality ? 1.0 : 0.0;
      break;
    case StepModel::kContinuous:
      step.quality = std::clamp(
          task.base_quality + kSpreadScale * params.temperature * truncated_offset(u, params), 0.0, 1.0);
      break;
  }
  return step;
}

double true_reward(const SyntheticTask& task, const ReasoningPath& path) {
  if (path.steps.empty()) return task.base_quality;
  double sum = 0.0;
  for (const auto& s : path.steps) sum += s.quality;
  return sum / static_cast<double>(path.steps.size());
}

ReasoningPath finalize(const SyntheticTask& task, ReasoningPath path) {
  if (path.terminal) return path;
  if (path.length() != static_cast<std::size_t>(task.depth)) throw PathNotComplete();
  path.terminal = true;
  if (true_reward(task, path) >= task.tau) {
    path.answer = task.correct_answer;
  } else {
    RngStream rng(task.tree_seed, mix64(path.key(), kAnswerSalt));
    auto wrong = static_cast<AnswerId>(rng.below(static_cast<std::uint64_t>(task.answer_space - 1)));
    if (wrong >= task.correct_answer) ++wrong;
    path.answer = wrong;
  }
  return path;
}

PresetQualityPolicy::PresetQualityPolicy(std::vector<SamplingParams> presets, std::vector<double> qualities,
                                         double fallback)
    : presets_(std::move(presets)), qualities_(std::move(qualities)), fallback_(fallback) {
  if (presets_.size() != qualities_.size()) throw ConfigError("presets", "one quality per preset");
  for (double q : qualities_)
    if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("presets", "quality must lie in [0, 1]");
  if (!(fallback_ >= 0.0 && fallback_ <= 1.0)) throw ConfigError("presets", "fallback must lie in [0, 1]");
}

Step PresetQualityPolicy::sample_step(const SyntheticTask& task, const ReasoningPath& prefix,
                                      const SamplingParams& params, RngStream rng) const {
  if (prefix.terminal || prefix.length() >= static_cast<std::size_t>(task.depth)) throw PathTerminal();
  Step step;
  step.key = rng.next();
  step.quality = fallback_;
  for (std::size_t i = 0; i < presets_.size(); ++i)
    if (presets_[i] == params) step.quality = qualities_[i];
  return step;
}

ReasoningPath sample_child(const Policy& policy, const SyntheticTask& task, const ReasoningPath& prefix,
                           std::uint64_t child, const SamplingParams& params) {
  ReasoningPath next = prefix;
  next.steps.push_back(policy.sample_step(task, prefix, params, child_stream(task, prefix, child)));
  return next;
}

ReasoningPath sample_full_path(const Policy& policy, const SyntheticTask& task, std::uint64_t first_child,
                               const SamplingParams& params) {
  ReasoningPath path = sample_child(policy, task, root_path(task), first_child, params);
  while (path.length() < static_cast<std::size_t>(task.depth))
    path = sample_child(policy, task, path, 0, params);
  return policy.finalize(task, std::move(path));
}

double coverage_probability(const SyntheticTask& task, const SamplingParams& params, int n, int trials,
                            RngStream rng) {
  if (trials < 1) throw ConfigError("trials", "must be positive");
  if (n < 1) throw ConfigError("N", "must be positive");
  SyntheticPolicy policy;
  int covered = 0;
  for (int t = 0; t < trials; ++t) {
    SyntheticTask trial_task = task;
    trial_task.tree_seed = rng.next();
    for (int i = 0; i < n; ++i) {
      const auto path = sample_full_path(policy, trial_task, static_cast<std::uint64_t>(i), params);
      if (true_reward(trial_task, path) >= trial_task.tau) {
        ++covered;
        break;
      }
    }
  }
  return static_cast<double>(covered) / trials;
}

void TaskDistribution::validate() const {
  if (bands.empty()) throw ConfigError("env.mix", "needs at least one band");
  double total = 0.0;
  for (const auto& b : bands) {
    if (!(b.weight > 0.0)) throw ConfigError("env.mix", "weights must be positive");
    if (!(b.lo >= 0.0 && b.hi <= 1.0 && b.lo <= b.hi))
      throw ConfigError("env.mix", "quality range must satisfy 0 <= lo <= hi <= 1");
    total += b.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("env.mix", "weights must sum to 1");
  SyntheticTask probe;
  probe.tau = tau;
  probe.depth = depth;
  probe.answer_space = answer_space;
  probe.validate();
}

SyntheticTask TaskDistribution::sample(RngStream& rng, std::string question_id) const {
  SyntheticTask task;
  task.question_id = std::move(question_id);
  task.tau = tau;
  task.depth = depth;
  task.answer_space = answer_space;
  task.model = model;
  double pick = rng.uniform();
  const DifficultyBand* band = &bands.back();
  for (const auto& b : bands) {
    if (pick < b.weight) {
      band = &b;
      break;
    }
    pick -= b.weight;
  }
  task.base_quality = rng.uniform(band->lo, band->hi);
  task.correct_answer = static_cast<AnswerId>(rng.below(static_cast<std::uint64_t>(answer_space)));
  task.tree_seed = rng.next();
  return task;
}

}  // namespace catsearch::env
