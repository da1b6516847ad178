#include "catsearch/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace catsearch {

void SamplingParams::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw ConfigError("sampling.temperature", "must be positive");
  if (top_k < 0) throw ConfigError("sampling.top_k", "must be non-negative");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("sampling.top_p", "must lie in (0, 1]");
}

void ReasoningPath::validate(std::size_t max_depth) const {
  if (answer.has_value() != terminal)
    throw Error("reasoning path: answer must be present exactly when terminal");
  if (steps.size() > max_depth) throw Error("reasoning path longer than max depth");
}

BudgetLedger::BudgetLedger(std::int64_t max_units, std::int64_t consumed)
    : max_units_(max_units), consumed_(consumed) {
  if (max_units_ < 1) throw ConfigError("budget", "max must be positive");
  if (consumed_ < 0 || consumed_ > max_units_) throw ConfigError("budget", "consumed out of range");
}

BudgetLedger BudgetLedger::for_paths(std::int64_t max_paths, std::int64_t depth) {
  return BudgetLedger(max_paths * depth);
}

double BudgetLedger::remaining_fraction() const noexcept {
  return max_units_ > 0 ? static_cast<double>(remaining()) / static_cast<double>(max_units_) : 0.0;
}

bool BudgetLedger::try_charge(std::int64_t k) {
  if (k < 1) throw Error("charge amount must be positive");
  if (consumed_ + k > max_units_) return false;
  consumed_ += k;
  return true;
}

BudgetLedger charge(const BudgetLedger& ledger, std::int64_t k) {
  BudgetLedger next = ledger;
  if (!next.try_charge(k)) throw BudgetExhausted();
  return next;
}

const ScoredCandidate& select_best(std::span<const ScoredCandidate> candidates) {
  if (candidates.empty()) throw EmptyCandidateSet();
  const ScoredCandidate* best = &candidates.front();
  for (const auto& c : candidates.subspan(1)) {
    if (c.prm_score > best->prm_score ||
        (c.prm_score == best->prm_score && c.candidate_index < best->candidate_index))
      best = &c;
  }
  return *best;
}

std::vector<std::size_t> top_indices(std::span<const double> scores, std::size_t count) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(count, order.size()));
  return order;
}

}  // namespace catsearch
