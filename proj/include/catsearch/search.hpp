#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "catsearch/core.hpp"
#include "catsearch/env.hpp"
#include "catsearch/prm.hpp"

namespace catsearch::search {

enum class Strategy { kBestOfN, kBeamSearch, kMajorityVote };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);

struct SearchConfig {
  Strategy strategy = Strategy::kBestOfN;
  int n = 4;
  int beam_width = 4;  // beam search only; must divide n
  SamplingParams sampling;
  int max_depth = 1;

  void validate() const;
};

struct SearchResult {
  ScoredCandidate selected;
  std::vector<ScoredCandidate> all_candidates;
  std::int64_t units_consumed = 0;
  /// units_consumed / depth: complete-path equivalents.
  double paths_consumed = 0.0;
  std::optional<AnswerId> answer;
  bool correct = false;
  /// Budget ran out before the search finished; `selected` is the best seen.
  bool truncated = false;
};

/// N independent full paths, each scored once; returns the top-scored one.
/// Charges exactly N * depth units, or throws BudgetExhausted up front.
SearchResult best_of_n(const env::SyntheticTask& task, const env::Policy& policy, const prm::Prm& prm,
                       const SearchConfig& config, BudgetLedger& ledger);

/// Level-synchronous beam search: N candidates per level, N/M prefixes kept,
/// each expanded by M. Completed paths are re-scored before the final pick.
/// Running out of budget returns the best candidate so far, flagged.
SearchResult beam_search(const env::SyntheticTask& task, const env::Policy& policy, const prm::Prm& prm,
                         const SearchConfig& config, BudgetLedger& ledger);

/// Most frequent answer; ties go to the larger summed prm_score, then to the
/// smaller candidate_index. Throws EmptyCandidateSet on empty input.
AnswerId majority_vote(std::span<const ScoredCandidate> candidates);

/// Samples like best_of_n, then votes.
SearchResult majority_vote_search(const env::SyntheticTask& task, const env::Policy& policy,
                                  const prm::Prm& prm, const SearchConfig& config, BudgetLedger& ledger);

SearchResult run_search(const env::SyntheticTask& task, const env::Policy& policy, const prm::Prm& prm,
                        const SearchConfig& config, BudgetLedger& ledger);

/// Top value minus runner-up, on true rewards when every candidate has one and
/// on PRM scores otherwise. Fewer than two candidates gives 0.
double reward_gap(std::span<const ScoredCandidate> candidates);
double reward_gap(std::span<const double> values);

}  // namespace catsearch::search
