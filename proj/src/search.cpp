#include "catsearch/search.hpp"

#include <algorithm>
#include <map>

namespace catsearch::search {
namespace {

ScoredCandidate make_candidate(const env::SyntheticTask& task, const env::Policy& policy, const prm::Prm& prm,
                               ReasoningPath path, std::size_t index) {
  ScoredCandidate c;
  c.prm_score = prm.score(task, path);
  if (policy.has_ground_truth()) c.true_reward = env::true_reward(task, path);
  c.path = std::move(path);
  c.candidate_index = index;
  return c;
}

void finish(SearchResult& r, const env::SyntheticTask& task, std::int64_t units_before,
            const BudgetLedger& ledger) {
  r.units_consumed = ledger.consumed() - units_before;
  r.paths_consumed = static_cast<double>(r.units_consumed) / task.depth;
  if (!r.answer && r.selected.path.terminal) r.answer = r.selected.path.answer;
  r.correct = r.answer.has_value() && *r.answer == task.correct_answer;
}

std::vector<ScoredCandidate> sample_independent(const env::SyntheticTask& task, const env::Policy& policy,
                                                const prm::Prm& prm, const SearchConfig& config,
                                                BudgetLedger& ledger) {
  if (!ledger.try_charge(static_cast<std::int64_t>(config.n) * task.depth)) throw BudgetExhausted();
  std::vector<ScoredCandidate> out;
  out.reserve(static_cast<std::size_t>(config.n));
  for (int i = 0; i < config.n; ++i) {
    auto path = env::sample_full_path(policy, task, static_cast<std::uint64_t>(i), config.sampling);
    out.push_back(make_candidate(task, policy, prm, std::move(path), static_cast<std::size_t>(i)));
  }
  return out;
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kBestOfN: return "best_of_n";
    case Strategy::kBeamSearch: return "beam_search";
    case Strategy::kMajorityVote: return "majority_vote";
  }
  return "unknown";
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "best_of_n") return Strategy::kBestOfN;
  if (name == "beam_search") return Strategy::kBeamSearch;
  if (name == "majority_vote") return Strategy::kMajorityVote;
  throw ConfigError("strategy", "unknown strategy '" + name + "'");
}

void SearchConfig::validate() const {
  if (n < 1) throw ConfigError("search.n", "must be positive");
  if (max_depth < 1) throw ConfigError("search.max_depth", "must be positive");
  sampling.validate();
  if (strategy == Strategy::kBeamSearch) {
    if (beam_width < 1) throw ConfigError("beam.width", "must be positive");
    if (n % beam_width != 0) throw ConfigError("beam.width", "must divide N");
  }
}

SearchResult best_of_n(const env::SyntheticTask& task, const env::Policy& policy, const prm::Prm& prm,
                       const SearchConfig& config, BudgetLedger& ledger) {
  config.validate();
  const auto before = ledger.consumed();
  SearchResult r;
  r.all_candidates = sample_independent(task, policy, prm, config, ledger);
  r.selected = select_best(r.all_candidates);
  finish(r, task, before, ledger);
  return r;
}

SearchResult beam_search(const env::SyntheticTask& task, const env::Policy& policy, const prm::Prm& prm,
                         const SearchConfig& config, BudgetLedger& ledger) {
  config.validate();
  const auto before = ledger.consumed();
  const auto keep = static_cast<std::size_t>(config.n / config.beam_width);
  SearchResult r;

  std::vector<ReasoningPath> beam{env::root_path(task)};
  std::vector<ScoredCandidate> level;
  for (int depth = 1; depth <= task.depth; ++depth) {
    level.clear();
    const std::uint64_t fanout =
        depth == 1 ? static_cast<std::uint64_t>(config.n) : static_cast<std::uint64_t>(config.beam_width);
    for (const auto& prefix : beam) {
      for (std::uint64_t child = 0; child < fanout; ++child) {
        if (!ledger.try_charge(1)) {
          r.truncated = true;
          break;
        }
        auto next = env::sample_child(policy, task, prefix, child, config.sampling);
        if (depth == task.depth) next = policy.finalize(task, std::move(next));
        level.push_back(make_candidate(task, policy, prm, std::move(next), level.size()));
      }
      if (r.truncated) break;
    }
    if (r.truncated || depth == task.depth) break;

    std::vector<double> scores;
    for (const auto& c : level) scores.push_back(c.prm_score);
    std::vector<ReasoningPath> next_beam;
    for (auto idx : top_indices(scores, keep)) next_beam.push_back(level[idx].path);
    beam = std::move(next_beam);
  }

  if (level.empty()) {
    // Nothing sampled at the failing level; fall back to the surviving prefixes.
    for (auto& p : beam) level.push_back(make_candidate(task, policy, prm, std::move(p), level.size()));
  }
  r.all_candidates = std::move(level);
  r.selected = select_best(r.all_candidates);
  finish(r, task, before, ledger);
  return r;
}

AnswerId majority_vote(std::span<const ScoredCandidate> candidates) {
  if (candidates.empty()) throw EmptyCandidateSet();
  struct Tally {
    int count = 0;
    double mass = 0.0;
    std::size_t first_index = 0;
  };
  std::map<AnswerId, Tally> tallies;
  for (const auto& c : candidates) {
    if (!c.path.terminal || !c.path.answer) throw Error("majority_vote: candidate is not terminal");
    auto [it, inserted] = tallies.try_emplace(*c.path.answer);
    if (inserted) it->second.first_index = c.candidate_index;
    it->second.count += 1;
    it->second.mass += c.prm_score;
    it->second.first_index = std::min(it->second.first_index, c.candidate_index);
  }
  auto better = [](const Tally& a, const Tally& b) {
    if (a.count != b.count) return a.count > b.count;
    if (a.mass != b.mass) return a.mass > b.mass;
    return a.first_index < b.first_index;
  };
  auto best = tallies.begin();
  for (auto it = std::next(tallies.begin()); it != tallies.end(); ++it)
    if (better(it->second, best->second)) best = it;
  return best->first;
}

SearchResult majority_vote_search(const env::SyntheticTask& task, const env::Policy& policy,
                                  const prm::Prm& prm, const SearchConfig& config, BudgetLedger& ledger) {
  config.validate();
  const auto before = ledger.consumed();
  SearchResult r;
  r.all_candidates = sample_independent(task, policy, prm, config, ledger);
  r.answer = majority_vote(r.all_candidates);
  std::vector<ScoredCandidate> voters;
  for (const auto& c : r.all_candidates)
    if (c.path.answer == r.answer) voters.push_back(c);
  r.selected = select_best(voters);
  finish(r, task, before, ledger);
  return r;
}

SearchResult run_search(const env::SyntheticTask& task, const env::Policy& policy, const prm::Prm& prm,
                        const SearchConfig& config, BudgetLedger& ledger) {
  switch (config.strategy) {
    case Strategy::kBestOfN: return best_of_n(task, policy, prm, config, ledger);
    case Strategy::kBeamSearch: return beam_search(task, policy, prm, config, ledger);
    case Strategy::kMajorityVote: return majority_vote_search(task, policy, prm, config, ledger);
  }
  throw ConfigError("strategy", "unhandled strategy");
}

double reward_gap(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  double top = values[0] >= values[1] ? values[0] : values[1];
  double second = values[0] >= values[1] ? values[1] : values[0];
  for (std::size_t i = 2; i < values.size(); ++i) {
    if (values[i] > top) {
      second = top;
      top = values[i];
    } else if (values[i] > second) {
      second = values[i];
    }
  }
  return top - second;
}

double reward_gap(std::span<const ScoredCandidate> candidates) {
  const bool use_truth = !candidates.empty() && std::all_of(candidates.begin(), candidates.end(), [](auto& c) {
    return c.true_reward.has_value();
  });
  std::vector<double> values;
  values.reserve(candidates.size());
  for (const auto& c : candidates) values.push_back(use_truth ? *c.true_reward : c.prm_score);
  return reward_gap(values);
}

}  // namespace catsearch::search
