#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "catsearch/errors.hpp"
#include "catsearch/rng.hpp"

namespace catsearch {

using AnswerId = std::int64_t;

/// Decoding knobs handed to the policy. top_k == 0 disables top-k truncation.
struct SamplingParams {
  double temperature = 1.0;
  int top_k = 0;
  double top_p = 1.0;

  /// Throws ConfigError when a field is out of range.
  void validate() const;

  friend bool operator==(const SamplingParams&, const SamplingParams&) = default;
};

/// One reasoning step. `quality` is the latent per-step quality used by the
/// synthetic environments; remote policies fill `text` instead. `key` is the
/// identity of the prefix ending in this step and is unique per tree node.
struct Step {
  double quality = 0.0;
  std::uint64_t key = 0;
  std::string text;
};

struct ReasoningPath {
  std::string question_id;
  std::uint64_t root_key = 0;
  std::vector<Step> steps;
  bool terminal = false;
  std::optional<AnswerId> answer;

  std::size_t length() const noexcept { return steps.size(); }

  /// Identity of this prefix: the key of the last step, or the root key.
  std::uint64_t key() const noexcept { return steps.empty() ? root_key : steps.back().key; }

  /// Checks answer-iff-terminal and the depth limit.
  void validate(std::size_t max_depth) const;
};

struct ScoredCandidate {
  ReasoningPath path;
  double prm_score = 0.0;
  std::optional<double> true_reward;
  std::size_t candidate_index = 0;
};

/// Counts budget units (one unit = one sampled step, so a full-depth path
/// costs `depth` units). consumed never exceeds max_units.
class BudgetLedger {
 public:
  BudgetLedger() = default;
  explicit BudgetLedger(std::int64_t max_units, std::int64_t consumed = 0);

  /// Ledger sized for `max_paths` complete paths of length `depth`.
  static BudgetLedger for_paths(std::int64_t max_paths, std::int64_t depth);

  std::int64_t max_units() const noexcept { return max_units_; }
  std::int64_t consumed() const noexcept { return consumed_; }
  std::int64_t remaining() const noexcept { return max_units_ - consumed_; }
  double remaining_fraction() const noexcept;

  /// Consumes k units if they fit; returns false (and changes nothing) otherwise.
  bool try_charge(std::int64_t k);

 private:
  std::int64_t max_units_ = 0;
  std::int64_t consumed_ = 0;
};

/// Value-returning charge: a new ledger with k more units consumed, or
/// BudgetExhausted when that would overrun max_units.
BudgetLedger charge(const BudgetLedger& ledger, std::int64_t k);

/// Highest prm_score; ties go to the smallest candidate_index.
const ScoredCandidate& select_best(std::span<const ScoredCandidate> candidates);

/// Positions of the `count` highest scores, best first. Ties keep the
/// earlier position. This is the pruning rule shared by every search strategy.
std::vector<std::size_t> top_indices(std::span<const double> scores, std::size_t count);

}  // namespace catsearch
