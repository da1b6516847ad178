#include "catsearch/cats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace catsearch::cats {
namespace {

std::size_t index_of(const std::vector<int>& values, int v, const char* field) {
  const auto it = std::find(values.begin(), values.end(), v);
  if (it == values.end()) throw ConfigError(field, "value " + std::to_string(v) + " is not on the action grid");
  return static_cast<std::size_t>(it - values.begin());
}

struct Node {
  ReasoningPath path;
  double score = 0.0;
  std::size_t parent = 0;  // index of the expansion that produced this node
};

struct Expansion {
  bool expanded = false;
  double reward = 0.0;
  std::vector<Node> retained;
};

// Samples up to 1 + extra_samples children of `node`, leaving `reserve` units
// unspent, and keeps the best retain_count of them.
Expansion expand(const Node& node, const ControlAction& action, const env::SyntheticTask& task,
                 const env::Policy& policy, const prm::Prm& prm, const CatsConfig& config, BudgetLedger& ledger,
                 std::int64_t reserve) {
  Expansion out;
  const std::int64_t room = ledger.remaining() - reserve;
  const auto count = static_cast<int>(std::min<std::int64_t>(1 + action.extra_samples, room));
  if (count < 1 || !ledger.try_charge(count)) return out;
  out.expanded = true;

  const auto& params = config.grid.presets[static_cast<std::size_t>(action.preset)];
  std::vector<Node> children;
  std::vector<double> scores;
  for (int j = 0; j < count; ++j) {
    auto path = env::sample_child(policy, task, node.path, static_cast<std::uint64_t>(j), params);
    if (static_cast<int>(path.length()) == task.depth) path = policy.finalize(task, std::move(path));
    const double s = prm.score(task, path);
    scores.push_back(s);
    children.push_back({std::move(path), s, 0});
  }
  const auto keep = top_indices(scores, static_cast<std::size_t>(std::min(action.retain_count, count)));
  std::vector<bool> kept(children.size(), false);
  std::vector<double> retained;
  std::vector<double> discarded;
  for (auto i : keep) {
    kept[i] = true;
    retained.push_back(scores[i]);
  }
  for (std::size_t i = 0; i < children.size(); ++i)
    if (!kept[i]) discarded.push_back(scores[i]);

  ControlAction effective = action;
  effective.extra_samples = count - 1;
  out.reward = step_reward(effective, config.grid, retained, discarded, scores, config.weights);
  for (auto i : keep) out.retained.push_back(std::move(children[i]));
  return out;
}

std::vector<double> scores_of(const std::vector<Node>& nodes) {
  std::vector<double> s;
  s.reserve(nodes.size());
  for (const auto& n : nodes) s.push_back(n.score);
  return s;
}

std::vector<Node> prune(std::vector<Node> nodes, std::size_t keep) {
  const auto scores = scores_of(nodes);
  std::vector<Node> out;
  for (auto i : top_indices(scores, keep)) out.push_back(std::move(nodes[i]));
  return out;
}

ScoredCandidate to_candidate(const env::SyntheticTask& task, const env::Policy& policy, Node node,
                             std::size_t index) {
  ScoredCandidate c;
  c.prm_score = node.score;
  if (policy.has_ground_truth()) c.true_reward = env::true_reward(task, node.path);
  c.path = std::move(node.path);
  c.candidate_index = index;
  return c;
}

struct PendingUpdate {
  ControlState state;
  std::size_t action;
  double log_prob;
  double reward;
};

EpisodeLog run_episode(CatsAgent& agent, const env::SyntheticTask& task, const env::Policy& policy,
                       const prm::Prm& prm, const CatsConfig& config, RngStream& rng) {
  EpisodeLog log;
  log.prm_id = prm.id();
  log.base_quality = task.base_quality;
  const auto stats = prm.sparsity_stats();
  auto ledger = BudgetLedger::for_paths(config.max_paths, task.depth);
  const auto K = static_cast<std::size_t>(config.beam_size);

  std::vector<Node> beam{{env::root_path(task), 0.0, 0}};
  std::vector<double> beam_scores;  // empty at the root
  double td_sum = 0.0;
  for (int d = 1; d <= task.depth; ++d) {
    std::vector<PendingUpdate> pending;
    std::vector<Node> next;
    for (const auto& node : beam) {
      const auto s = extract_features(beam_scores, ledger, d - 1, task.depth, config.beam_size, stats);
      const auto [a, logp] = agent.sample_action(s, rng);
      auto e = expand(node, config.grid.decode(a), task, policy, prm, config, ledger, task.depth - d);
      if (!e.expanded) continue;
      pending.push_back({s, a, logp, e.reward});
      log.total_reward += e.reward;
      for (auto& child : e.retained) {
        child.parent = pending.size() - 1;
        next.push_back(std::move(child));
      }
    }
    if (next.empty()) break;
    beam = prune(std::move(next), K);
    beam_scores = scores_of(beam);

    Transition t;
    t.next_state = extract_features(beam_scores, ledger, d, task.depth, config.beam_size, stats);
    t.terminal = d == task.depth;
    for (const auto& child : beam) {
      const auto& p = pending[child.parent];
      t.state = p.state;
      t.action = p.action;
      t.log_prob = p.log_prob;
      t.reward = p.reward;
      td_sum += a2c_update(t, agent, config.weights, config.entropy_coef).td;
      ++log.transitions;
    }
  }

  log.mean_td = log.transitions > 0 ? td_sum / log.transitions : 0.0;
  log.paths_consumed = static_cast<double>(ledger.consumed()) / task.depth;
  const auto best = std::max_element(beam.begin(), beam.end(),
                                     [](const Node& a, const Node& b) { return a.score < b.score; });
  log.correct = best != beam.end() && best->path.answer && *best->path.answer == task.correct_answer;
  return log;
}

nlohmann::json params_to_json(const SamplingParams& p) {
  return {{"temperature", p.temperature}, {"top_k", p.top_k}, {"top_p", p.top_p}};
}

}  // namespace

// ---------------------------------------------------------------------------

ControlAction ActionGrid::decode(std::size_t index) const {
  if (index >= size()) throw ConfigError("action", "index out of range");
  const auto np = presets.size();
  const auto nr = retain_counts.size();
  ControlAction a;
  a.preset = static_cast<int>(index % np);
  a.retain_count = retain_counts[(index / np) % nr];
  a.extra_samples = extra_samples[index / (np * nr)];
  return a;
}

std::size_t ActionGrid::encode(const ControlAction& action) const {
  const auto e = index_of(extra_samples, action.extra_samples, "action.extra_samples");
  const auto r = index_of(retain_counts, action.retain_count, "action.retain_count");
  if (action.preset < 0 || static_cast<std::size_t>(action.preset) >= presets.size())
    throw ConfigError("action.preset", "index out of range");
  return (e * retain_counts.size() + r) * presets.size() + static_cast<std::size_t>(action.preset);
}

int ActionGrid::max_extra() const { return *std::max_element(extra_samples.begin(), extra_samples.end()); }

void ActionGrid::validate() const {
  if (extra_samples.empty() || retain_counts.empty() || presets.empty())
    throw ConfigError("cats.grid", "every action dimension needs at least one option");
  for (int e : extra_samples)
    if (e < 0) throw ConfigError("cats.extra_samples", "must be non-negative");
  for (int r : retain_counts)
    if (r < 1) throw ConfigError("cats.retain_counts", "must be positive");
  for (const auto& p : presets) p.validate();
}

void CatsWeights::validate() const {
  if (lambda_c < 0.0 || lambda_m < 0.0 || lambda_r < 0.0)
    throw ConfigError("cats.lambda", "weights must be non-negative");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("cats.gamma", "must lie in (0, 1]");
}

void CatsConfig::validate() const {
  grid.validate();
  weights.validate();
  if (beam_size < 1) throw ConfigError("cats.beam_size", "must be positive");
  if (max_paths < 1) throw ConfigError("cats.max_paths", "must be positive");
  if (actor_hidden < 1 || critic_hidden < 1) throw ConfigError("cats.hidden", "must be positive");
  if (!(lr > 0.0)) throw ConfigError("cats.lr", "must be positive");
  if (entropy_coef < 0.0) throw ConfigError("cats.entropy_coef", "must be non-negative");
}

ControlState extract_features(std::span<const double> scores, const BudgetLedger& ledger, int depth,
                              int max_depth, int beam_size, const prm::SparsityStats& prm_stats) {
  ControlState s{};
  if (!scores.empty()) {
    const auto n = static_cast<double>(scores.size());
    double lo = scores[0];
    double hi = scores[0];
    double sum = 0.0;
    for (double v : scores) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (double v : scores) ss += (v - mean) * (v - mean);
    s[0] = std::min(1.0, n / std::max(beam_size, 1));
    s[1] = hi;
    s[2] = mean;
    s[3] = lo;
    s[4] = std::sqrt(ss / n);
    s[9] = search::reward_gap(scores);
  }
  s[5] = std::clamp(ledger.remaining_fraction(), 0.0, 1.0);
  s[6] = max_depth > 0 ? std::clamp(static_cast<double>(depth) / max_depth, 0.0, 1.0) : 0.0;
  s[7] = prm_stats.total_sparsity;
  s[8] = prm_stats.last_layer_sparsity;
  return s;
}

double step_reward(const ControlAction& action, const ActionGrid& grid, std::span<const double> retained,
                   std::span<const double> discarded, std::span<const double> all_candidates,
                   const CatsWeights& weights) {
  if (retained.empty()) throw EmptyCandidateSet();
  const int max_extra = grid.max_extra();
  const double cost = max_extra > 0 ? static_cast<double>(action.extra_samples) / max_extra : 0.0;
  double margin = 0.0;
  if (!discarded.empty()) {
    const double worst_kept = *std::min_element(retained.begin(), retained.end());
    const double best_dropped = *std::max_element(discarded.begin(), discarded.end());
    margin = std::max(0.0, worst_kept - best_dropped);
  }
  double top = *std::max_element(retained.begin(), retained.end());
  if (!all_candidates.empty()) top = std::max(top, *std::max_element(all_candidates.begin(), all_candidates.end()));
  return -weights.lambda_c * cost + weights.lambda_m * margin + weights.lambda_r * top;
}

double td_error(double reward, double gamma, double v_next, double v_curr, bool terminal) {
  return reward + (terminal ? 0.0 : gamma * v_next) - v_curr;
}

CatsAgent::CatsAgent(const CatsConfig& config, RngStream& rng)
    : actor(nn::Mlp::glorot({kFeatureWidth, config.actor_hidden, config.grid.size()}, nn::Head::kSoftmax, rng)),
      critic(nn::Mlp::glorot({kFeatureWidth, config.critic_hidden, 1}, nn::Head::kIdentity, rng)),
      actor_opt(actor.param_count(), config.lr),
      critic_opt(critic.param_count(), config.lr) {}

std::vector<double> CatsAgent::policy(const ControlState& state) const { return actor.predict(state); }

double CatsAgent::value(const ControlState& state) const { return critic.predict(state)[0]; }

std::size_t CatsAgent::greedy_action(const ControlState& state) const {
  const auto p = policy(state);
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

std::pair<std::size_t, double> CatsAgent::sample_action(const ControlState& state, RngStream& rng) const {
  const auto p = policy(state);
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t a = p.size() - 1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) {
      a = i;
      break;
    }
  }
  return {a, std::log(std::max(p[a], std::numeric_limits<double>::min()))};
}

UpdateLosses a2c_update(const Transition& t, CatsAgent& agent, const CatsWeights& weights, double entropy_coef) {
  if (!std::isfinite(t.reward)) throw TrainingDiverged("a2c_update: non-finite reward");
  const auto critic_cache = agent.critic.forward(t.state);
  const double v_curr = critic_cache.output[0];
  const double v_next = t.terminal ? 0.0 : agent.value(t.next_state);
  UpdateLosses out;
  out.td = td_error(t.reward, weights.gamma, v_next, v_curr, t.terminal);
  if (!std::isfinite(out.td)) throw TrainingDiverged("a2c_update: non-finite TD error");
  out.critic_loss = 0.5 * out.td * out.td;

  const auto actor_cache = agent.actor.forward(t.state);
  const auto& p = actor_cache.output;
  if (t.action >= p.size()) throw ConfigError("action", "index out of range");
  const double pa = std::max(p[t.action], std::numeric_limits<double>::min());
  out.actor_loss = -std::log(pa) * out.td;

  // With no signal there is no step: Adam's momentum would otherwise move
  // the parameters on a zero gradient.
  if (out.td == 0.0 && entropy_coef == 0.0) return out;

  // d(0.5 td^2)/dv_curr = -td with the target frozen.
  const double g_value[1] = {-out.td};
  const auto critic_grad = agent.critic.backward(critic_cache, g_value);

  std::vector<double> g_probs(p.size(), 0.0);
  g_probs[t.action] = -out.td / pa;
  if (entropy_coef > 0.0) {
    // Loss term -beta H(p); dH/dp_i = -(log p_i + 1).
    for (std::size_t i = 0; i < p.size(); ++i)
      g_probs[i] += entropy_coef * (std::log(std::max(p[i], std::numeric_limits<double>::min())) + 1.0);
  }
  const auto actor_grad = agent.actor.backward(actor_cache, g_probs);

  nn::adam_step(agent.critic, critic_grad, agent.critic_opt);
  nn::adam_step(agent.actor, actor_grad, agent.actor_opt);
  return out;
}

TrainingResult train_cats(const env::Policy& policy, const env::TaskDistribution& tasks,
                          std::span<const prm::Prm* const> prms, int episodes, const CatsConfig& config,
                          RngStream rng) {
  config.validate();
  TrainingResult result;
  auto init = rng.derive(0);
  result.agent = CatsAgent(config, init);
  continue_training(result, policy, tasks, prms, episodes, config, rng.derive(1));
  return result;
}

void continue_training(TrainingResult& result, const env::Policy& policy, const env::TaskDistribution& tasks,
                       std::span<const prm::Prm* const> prms, int episodes, const CatsConfig& config,
                       RngStream rng) {
  config.validate();
  tasks.validate();
  if (episodes < 1) throw ConfigError("episodes", "must be positive");
  if (prms.empty()) throw ConfigError("prms", "need at least one PRM");
  for (const auto* p : prms)
    if (p == nullptr) throw ConfigError("prms", "null PRM");
  if (result.agent.actor.output_size() != config.grid.size())
    throw ConfigError("cats.grid", "agent action count does not match the grid");

  auto task_rng = rng.derive(0);
  auto action_rng = rng.derive(1);
  const int offset = static_cast<int>(result.log.size());
  for (int e = 0; e < episodes; ++e) {
    const int episode = offset + e;
    const auto task = tasks.sample(task_rng, "train-" + std::to_string(episode));
    const auto& prm = *prms[static_cast<std::size_t>(episode) % prms.size()];
    auto log = run_episode(result.agent, task, policy, prm, config, action_rng);
    log.episode = episode;
    result.log.push_back(std::move(log));
  }
}

search::SearchResult cats_infer(const env::SyntheticTask& task, const env::Policy& policy, const prm::Prm& prm,
                                const CatsAgent& agent, const CatsConfig& config, BudgetLedger& ledger) {
  if (agent.actor.output_size() != config.grid.size())
    throw ConfigError("cats.grid", "agent action count does not match the grid");
  return cats_infer_with(
      task, policy, prm, [&agent](const ControlState& s) { return agent.greedy_action(s); }, config, ledger);
}

search::SearchResult cats_infer_with(const env::SyntheticTask& task, const env::Policy& policy,
                                     const prm::Prm& prm, const ActionSelector& select, const CatsConfig& config,
                                     BudgetLedger& ledger) {
  config.validate();
  task.validate();
  if (ledger.remaining() < 1) throw BudgetExhausted();
  const auto before = ledger.consumed();
  const auto stats = prm.sparsity_stats();
  const auto K = static_cast<std::size_t>(config.beam_size);

  search::SearchResult r;
  std::vector<ScoredCandidate> finished;
  std::vector<Node> beam{{env::root_path(task), 0.0, 0}};
  std::vector<double> beam_scores;
  for (int d = 1; d <= task.depth && finished.size() < K; ++d) {
    std::vector<Node> next;
    for (const auto& node : beam) {
      const auto s = extract_features(beam_scores, ledger, d - 1, task.depth, config.beam_size, stats);
      const auto action = config.grid.decode(select(s));
      auto e = expand(node, action, task, policy, prm, config, ledger, task.depth - d);
      if (!e.expanded) {
        r.truncated = true;
        continue;
      }
      for (auto& child : e.retained) {
        if (child.path.terminal)
          finished.push_back(to_candidate(task, policy, std::move(child), finished.size()));
        else
          next.push_back(std::move(child));
      }
    }
    if (next.empty()) break;
    beam = prune(std::move(next), K > finished.size() ? K - finished.size() : 0);
    beam_scores = scores_of(beam);
  }

  if (finished.empty()) {
    // Budget ran out before any path completed.
    r.truncated = true;
    for (auto& node : beam)
      if (!node.path.steps.empty()) r.all_candidates.push_back(to_candidate(task, policy, std::move(node), r.all_candidates.size()));
    if (r.all_candidates.empty()) throw BudgetExhausted();
  } else {
    r.all_candidates = std::move(finished);
  }
  r.selected = select_best(r.all_candidates);
  r.units_consumed = ledger.consumed() - before;
  r.paths_consumed = static_cast<double>(r.units_consumed) / task.depth;
  if (r.selected.path.terminal) r.answer = r.selected.path.answer;
  r.correct = r.answer.has_value() && *r.answer == task.correct_answer;
  return r;
}

// ---------------------------------------------------------------------------

nlohmann::json agent_to_json(const CatsAgent& agent, const CatsConfig& config) {
  nlohmann::json presets = nlohmann::json::array();
  for (const auto& p : config.grid.presets) presets.push_back(params_to_json(p));
  nlohmann::json names = nlohmann::json::array();
  for (const char* n : kFeatureNames) names.push_back(n);
  return {
      {"actor", nn::to_json(agent.actor, &agent.actor_opt)},
      {"critic", nn::to_json(agent.critic, &agent.critic_opt)},
      {"metadata",
       {{"feature_layout_version", kFeatureLayoutVersion},
        {"feature_layout", names},
        {"extra_samples", config.grid.extra_samples},
        {"retain_counts", config.grid.retain_counts},
        {"presets", presets},
        {"lambda_c", config.weights.lambda_c},
        {"lambda_m", config.weights.lambda_m},
        {"lambda_r", config.weights.lambda_r},
        {"gamma", config.weights.gamma},
        {"beam_size", config.beam_size},
        {"max_paths", config.max_paths},
        {"lr", config.lr},
        {"entropy_coef", config.entropy_coef}}},
  };
}

std::pair<CatsAgent, CatsConfig> agent_from_json(const nlohmann::json& doc) {
  try {
    const auto& meta = doc.at("metadata");
    const int version = meta.at("feature_layout_version").get<int>();
    if (version != kFeatureLayoutVersion)
      throw ConfigError("feature_layout_version", "checkpoint uses layout " + std::to_string(version) +
                                                      ", expected " + std::to_string(kFeatureLayoutVersion));
    CatsConfig config;
    config.grid.extra_samples = meta.at("extra_samples").get<std::vector<int>>();
    config.grid.retain_counts = meta.at("retain_counts").get<std::vector<int>>();
    config.grid.presets.clear();
    for (const auto& p : meta.at("presets"))
      config.grid.presets.push_back(
          {p.at("temperature").get<double>(), p.at("top_k").get<int>(), p.at("top_p").get<double>()});
    config.weights.lambda_c = meta.at("lambda_c").get<double>();
    config.weights.lambda_m = meta.at("lambda_m").get<double>();
    config.weights.lambda_r = meta.at("lambda_r").get<double>();
    config.weights.gamma = meta.at("gamma").get<double>();
    config.beam_size = meta.at("beam_size").get<int>();
    config.max_paths = meta.at("max_paths").get<int>();
    config.lr = meta.at("lr").get<double>();
    config.entropy_coef = meta.at("entropy_coef").get<double>();

    CatsAgent agent;
    agent.actor = nn::mlp_from_json(doc.at("actor"));
    agent.critic = nn::mlp_from_json(doc.at("critic"));
    agent.actor_opt = nn::adam_from_json(doc.at("actor")).value_or(nn::AdamState(agent.actor.param_count(), config.lr));
    agent.critic_opt =
        nn::adam_from_json(doc.at("critic")).value_or(nn::AdamState(agent.critic.param_count(), config.lr));
    config.actor_hidden = agent.actor.layer_sizes().at(1);
    config.critic_hidden = agent.critic.layer_sizes().at(1);
    if (agent.actor.input_size() != kFeatureWidth || agent.critic.input_size() != kFeatureWidth)
      throw ConfigError("feature_layout", "network input width does not match the feature layout");
    if (agent.actor.output_size() != config.grid.size())
      throw ConfigError("cats.grid", "actor output does not match the stored action grid");
    config.validate();
    return {std::move(agent), std::move(config)};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint", e.what());
  }
}

void save_agent(const std::filesystem::path& path, const CatsAgent& agent, const CatsConfig& config) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << agent_to_json(agent, config).dump(1) << '\n';
}

std::pair<CatsAgent, CatsConfig> load_agent(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint", "cannot read " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint", e.what());
  }
  return agent_from_json(doc);
}

}  // namespace catsearch::cats
