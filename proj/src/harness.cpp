#include "catsearch/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "catsearch/parallel.hpp"
#include "catsearch/search.hpp"

namespace catsearch::harness {
namespace {

constexpr std::uint64_t kTaskStream = 0x7461736b73ULL;
constexpr std::uint64_t kCatsStream = 0x63617473ULL;
constexpr std::uint64_t kTrainPrmStream = 0x74726169ULL;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

template <typename T>
T parse_number(const std::string& field, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(field, "cannot parse '" + text + "' as a number");
  return value;
}

// Decodes \n and \t so delimiters can be written on one line.
std::string unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char c = s[++i];
      out += c == 'n' ? '\n' : c == 't' ? '\t' : c;
    } else {
      out += s[i];
    }
  }
  return out;
}

// Tracks which keys have been consumed so leftovers can be reported.
class Reader {
 public:
  explicit Reader(const ConfigMap& map) : map_(map) {}

  bool has(const std::string& key) const { return map_.count(key) != 0; }

  const std::string* get(const std::string& key) {
    const auto it = map_.find(key);
    if (it == map_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  void str(const std::string& key, std::string& out) {
    if (const auto* v = get(key)) out = *v;
  }
  template <typename T>
  void num(const std::string& key, T& out) {
    if (const auto* v = get(key)) out = parse_number<T>(key, *v);
  }
  template <typename T>
  void list(const std::string& key, std::vector<T>& out) {
    if (const auto* v = get(key)) {
      out.clear();
      for (const auto& item : split(*v, ',')) out.push_back(parse_number<T>(key, item));
    }
  }

  void endpoint(const std::string& prefix, remote::EndpointConfig& e) {
    str(prefix + ".url", e.url);
    str(prefix + ".model", e.model);
    str(prefix + ".token_env", e.token_env);
    num(prefix + ".timeout_ms", e.timeout_ms);
    num(prefix + ".max_attempts", e.max_attempts);
    num(prefix + ".backoff_ms", e.backoff_ms);
    if (const auto* v = get(prefix + ".step_delimiter")) e.step_delimiter = unescape(*v);
    num(prefix + ".max_tokens", e.max_tokens);
  }

  void reject_unused() const {
    for (const auto& [key, value] : map_)
      if (used_.count(key) == 0) throw ConfigError(key, "unknown configuration key");
  }

 private:
  const ConfigMap& map_;
  std::set<std::string> used_;
};

std::vector<env::DifficultyBand> parse_mix(const std::string& text) {
  std::vector<env::DifficultyBand> bands;
  for (const auto& item : split(text, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("env.mix", "expected weight:lo-hi, got '" + item + "'");
    const auto range = trim(item.substr(colon + 1));
    const auto dash = range.find('-', 1);
    env::DifficultyBand b;
    b.weight = parse_number<double>("env.mix", trim(item.substr(0, colon)));
    if (dash == std::string::npos) {
      b.lo = b.hi = parse_number<double>("env.mix", range);
    } else {
      b.lo = parse_number<double>("env.mix", trim(range.substr(0, dash)));
      b.hi = parse_number<double>("env.mix", trim(range.substr(dash + 1)));
    }
    bands.push_back(b);
  }
  return bands;
}

std::vector<SamplingParams> parse_presets(const std::string& text) {
  std::vector<SamplingParams> out;
  for (const auto& item : split(text, ';')) {
    const auto parts = split(item, '/');
    if (parts.size() != 3) throw ConfigError("cats.presets", "expected temperature/top_k/top_p, got '" + item + "'");
    out.push_back({parse_number<double>("cats.presets", parts[0]), parse_number<int>("cats.presets", parts[1]),
                   parse_number<double>("cats.presets", parts[2])});
  }
  return out;
}

bool plain_name(const std::string& s) {
  return !s.empty() && std::none_of(s.begin(), s.end(), [](char c) {
    return c == ',' || c == ' ' || c == '\t' || c == '\n' || c == '"';
  });
}

std::string fixed6(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(6) << v;
  return out.str();
}

struct TrialOutcome {
  bool correct = false;
  double paths = 0.0;
  double wall_ms = 0.0;
};

template <typename Fn>
ResultRow run_cell(const ExperimentConfig& config, const std::string& strategy, const prm::Prm& prm, int n,
                   std::span<const env::SyntheticTask> tasks, Fn&& solve) {
  std::vector<TrialOutcome> outcomes(tasks.size());
  parallel_for(tasks.size(), config.jobs, [&](std::size_t t) {
    const auto start = std::chrono::steady_clock::now();
    const search::SearchResult r = solve(tasks[t]);
    const auto stop = std::chrono::steady_clock::now();
    outcomes[t] = {r.correct, r.paths_consumed, std::chrono::duration<double, std::milli>(stop - start).count()};
  });
  ResultRow row;
  row.experiment = config.name;
  row.seed = config.seed;
  row.strategy = strategy;
  row.prm = prm.id();
  row.N = n;
  row.trials = static_cast<int>(tasks.size());
  int correct = 0;
  double paths = 0.0;
  double wall = 0.0;
  for (const auto& o : outcomes) {
    correct += o.correct;
    paths += o.paths;
    wall += o.wall_ms;
  }
  row.accuracy = static_cast<double>(correct) / row.trials;
  row.mean_paths = paths / row.trials;
  row.mean_wall_ms = wall / row.trials;
  return row;
}

}  // namespace

// ---------------------------------------------------------------------------

ConfigMap parse_config(std::istream& in) {
  ConfigMap map;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(number), "expected key = value");
    auto key = trim(text.substr(0, eq));
    auto value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(number), "empty key");
    if (!map.emplace(key, std::move(value)).second) throw ConfigError(key, "duplicate key");
  }
  return map;
}

ConfigMap parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read " + path.string());
  return parse_config(in);
}

void ExperimentConfig::validate() const {
  if (!plain_name(name)) throw ConfigError("experiment.name", "must be non-empty without commas, quotes or spaces");
  if (trials < 1) throw ConfigError("experiment.trials", "must be positive");
  if (jobs < 1) throw ConfigError("experiment.jobs", "must be positive");
  tasks.validate();
  if (prms.empty()) throw ConfigError("prm.ids", "at least one PRM is required");
  std::set<std::string> ids;
  for (const auto& p : prms) {
    const std::string field = "prm." + p.id;
    if (!plain_name(p.id)) throw ConfigError(field, "PRM ids must be plain names");
    if (!ids.insert(p.id).second) throw ConfigError(field, "duplicate PRM id");
    if (p.kind == "oracle") {
      if (!(p.epsilon >= 0.0 && p.epsilon <= 1.0)) throw ConfigError(field + ".epsilon", "must lie in [0, 1]");
    } else if (p.kind == "trained") {
      if (p.train_size < 2) throw ConfigError(field + ".train_size", "must be at least 2");
      if (p.train.steps < 1) throw ConfigError(field + ".steps", "must be positive");
    } else if (p.kind == "remote") {
      p.endpoint.validate();
    } else {
      throw ConfigError(field + ".kind", "must be oracle, trained or remote");
    }
  }
  if (strategies.empty()) throw ConfigError("search.strategies", "at least one strategy is required");
  bool has_beam = false;
  bool has_cats = false;
  for (const auto& s : strategies) {
    if (s == "cats") {
      has_cats = true;
      continue;
    }
    has_beam |= search::strategy_from_string(s) == search::Strategy::kBeamSearch;
  }
  if (max_candidates < 1) throw ConfigError("search.max_candidates", "must be positive");
  if (budgets.empty()) throw ConfigError("search.budgets", "at least one budget is required");
  for (int n : budgets) {
    if (n < 1 || n > max_candidates)
      throw ConfigError("search.budgets", "every N must lie in [1, max_candidates]");
    if (has_beam && (beam_width < 1 || n % beam_width != 0))
      throw ConfigError("search.beam_width", "must divide every swept N (N=" + std::to_string(n) + ")");
  }
  sampling.validate();
  if (has_cats) {
    cats.validate();
    if (cats_episodes < 1 && !cats_checkpoint) throw ConfigError("cats.episodes", "must be positive");
    for (int n : cats_budgets)
      if (n < 1 || n > max_candidates) throw ConfigError("cats.budgets", "every cap must lie in [1, max_candidates]");
  }
  if (policy_endpoint) policy_endpoint->validate();
}

ExperimentConfig experiment_from_map(const ConfigMap& map) {
  ExperimentConfig c;
  Reader r(map);
  r.str("experiment.name", c.name);
  r.num("experiment.seed", c.seed);
  r.num("experiment.trials", c.trials);
  r.num("experiment.jobs", c.jobs);

  if (const auto* v = r.get("env.model")) {
    if (*v == "continuous") c.tasks.model = env::StepModel::kContinuous;
    else if (*v == "bernoulli") c.tasks.model = env::StepModel::kBernoulli;
    else throw ConfigError("env.model", "must be continuous or bernoulli");
  }
  r.num("env.tau", c.tasks.tau);
  r.num("env.depth", c.tasks.depth);
  r.num("env.answer_space", c.tasks.answer_space);
  if (const auto* v = r.get("env.mix")) c.tasks.bands = parse_mix(*v);

  std::vector<std::string> ids{"oracle"};
  if (const auto* v = r.get("prm.ids")) ids = split(*v, ',');
  for (const auto& id : ids) {
    PrmSpec p;
    p.id = id;
    const std::string pre = "prm." + id;
    r.str(pre + ".kind", p.kind);
    r.num(pre + ".epsilon", p.epsilon);
    if (const auto* v = r.get(pre + ".noise_seed")) p.noise_seed = parse_number<std::uint64_t>(pre + ".noise_seed", *v);
    r.num(pre + ".total_sparsity", p.sparsity.total_sparsity);
    r.num(pre + ".last_layer_sparsity", p.sparsity.last_layer_sparsity);
    r.num(pre + ".train_size", p.train_size);
    r.num(pre + ".label_noise", p.label_noise);
    r.list(pre + ".hidden", p.train.hidden);
    r.num(pre + ".steps", p.train.steps);
    r.num(pre + ".lr", p.train.lr);
    r.endpoint(pre, p.endpoint);
    c.prms.push_back(std::move(p));
  }

  if (const auto* v = r.get("policy.kind")) {
    if (*v == "remote") {
      c.policy_endpoint.emplace();
      r.endpoint("policy", *c.policy_endpoint);
    } else if (*v != "synthetic") {
      throw ConfigError("policy.kind", "must be synthetic or remote");
    }
  }

  if (const auto* v = r.get("search.strategies")) c.strategies = split(*v, ',');
  r.list("search.budgets", c.budgets);
  r.num("search.max_candidates", c.max_candidates);
  r.num("search.beam_width", c.beam_width);
  r.num("search.temperature", c.sampling.temperature);
  r.num("search.top_k", c.sampling.top_k);
  r.num("search.top_p", c.sampling.top_p);

  auto& k = c.cats;
  r.num("cats.episodes", c.cats_episodes);
  r.list("cats.budgets", c.cats_budgets);
  r.num("cats.beam_size", k.beam_size);
  r.num("cats.max_paths", k.max_paths);
  r.num("cats.lambda_c", k.weights.lambda_c);
  r.num("cats.lambda_m", k.weights.lambda_m);
  r.num("cats.lambda_r", k.weights.lambda_r);
  r.num("cats.gamma", k.weights.gamma);
  r.num("cats.lr", k.lr);
  r.num("cats.entropy_coef", k.entropy_coef);
  r.num("cats.actor_hidden", k.actor_hidden);
  r.num("cats.critic_hidden", k.critic_hidden);
  r.list("cats.extra_samples", k.grid.extra_samples);
  r.list("cats.retain_counts", k.grid.retain_counts);
  if (const auto* v = r.get("cats.presets")) k.grid.presets = parse_presets(*v);
  if (const auto* v = r.get("cats.checkpoint")) c.cats_checkpoint = *v;

  r.reject_unused();
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  return experiment_from_map(parse_config_file(path));
}

// ---------------------------------------------------------------------------

std::vector<const prm::Prm*> Backends::prm_pointers() const {
  std::vector<const prm::Prm*> out;
  for (const auto& p : prms) out.push_back(p.get());
  return out;
}

Backends make_backends(const ExperimentConfig& config) {
  config.validate();
  Backends b;
  if (config.policy_endpoint)
    b.policy = std::make_unique<remote::RemotePolicy>(*config.policy_endpoint);
  else
    b.policy = std::make_unique<env::SyntheticPolicy>();
  for (const auto& spec : config.prms) {
    const std::uint64_t id_hash = remote::fnv1a(spec.id);
    if (spec.kind == "oracle") {
      const auto seed = spec.noise_seed.value_or(mix64(config.seed, id_hash));
      b.prms.push_back(std::make_unique<prm::NoisyOraclePrm>(spec.epsilon, seed, spec.sparsity, spec.id));
    } else if (spec.kind == "trained") {
      RngStream rng(mix64(config.seed, id_hash), kTrainPrmStream);
      const auto data = prm::make_synthetic_dataset(config.tasks, spec.train_size, spec.label_noise, rng);
      auto trained = prm::train_prm(data, spec.train, rng);
      b.prms.push_back(std::make_unique<prm::TrainedPrm>(trained.net(), spec.id));
    } else {
      b.prms.push_back(std::make_unique<remote::RemotePrm>(spec.endpoint, spec.id, spec.sparsity));
    }
  }
  return b;
}

std::vector<env::SyntheticTask> evaluation_tasks(const ExperimentConfig& config) {
  RngStream rng(config.seed, kTaskStream);
  std::vector<env::SyntheticTask> tasks;
  tasks.reserve(static_cast<std::size_t>(config.trials));
  for (int t = 0; t < config.trials; ++t)
    tasks.push_back(config.tasks.sample(rng, config.name + "-" + std::to_string(t)));
  return tasks;
}

cats::TrainingResult prepare_cats(const ExperimentConfig& config, const Backends& backends) {
  if (config.cats_checkpoint) {
    cats::TrainingResult out;
    out.agent = cats::load_agent(*config.cats_checkpoint).first;
    return out;
  }
  const auto prms = backends.prm_pointers();
  return cats::train_cats(*backends.policy, config.tasks, prms, config.cats_episodes, config.cats,
                          RngStream(config.seed, kCatsStream));
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config) {
  const auto backends = make_backends(config);
  const bool needs_cats = std::count(config.strategies.begin(), config.strategies.end(), "cats") > 0;
  std::optional<cats::TrainingResult> trained;
  if (needs_cats) trained = prepare_cats(config, backends);
  return run_experiment(config, backends, trained ? &trained->agent : nullptr);
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config, const Backends& backends,
                                      const cats::CatsAgent* agent) {
  config.validate();
  const auto tasks = evaluation_tasks(config);
  const auto& policy = *backends.policy;
  std::vector<ResultRow> rows;
  for (const auto& strategy : config.strategies) {
    for (const auto& prm_ptr : backends.prms) {
      const auto& prm = *prm_ptr;
      if (strategy == "cats") {
        if (agent == nullptr) throw ConfigError("cats", "no trained controller supplied");
        auto caps = config.cats_budgets;
        if (caps.empty()) caps.push_back(config.cats.max_paths);
        for (int cap : caps) {
          rows.push_back(run_cell(config, strategy, prm, cap, tasks, [&](const env::SyntheticTask& task) {
            auto ledger = BudgetLedger::for_paths(cap, task.depth);
            return cats::cats_infer(task, policy, prm, *agent, config.cats, ledger);
          }));
        }
        continue;
      }
      search::SearchConfig sc;
      sc.strategy = search::strategy_from_string(strategy);
      sc.beam_width = config.beam_width;
      sc.sampling = config.sampling;
      sc.max_depth = config.tasks.depth;
      for (int n : config.budgets) {
        sc.n = n;
        rows.push_back(run_cell(config, strategy, prm, n, tasks, [&](const env::SyntheticTask& task) {
          auto ledger = BudgetLedger::for_paths(n, task.depth);
          return search::run_search(task, policy, prm, sc, ledger);
        }));
      }
    }
  }
  return rows;
}

void write_csv(std::ostream& out, std::span<const ResultRow> rows, bool include_wall_time) {
  std::string header = kCsvHeader;
  if (!include_wall_time) header.erase(header.rfind(','));
  out << header << '\n';
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.seed << ',' << r.strategy << ',' << r.prm << ',' << r.N << ',' << r.trials
        << ',' << fixed6(r.accuracy) << ',' << fixed6(r.mean_paths);
    if (include_wall_time) out << ',' << fixed6(r.mean_wall_ms);
    out << '\n';
  }
}

std::vector<ResultRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw EmptyResults("results file is empty");
  const bool with_wall = trim(line) == kCsvHeader;
  std::vector<ResultRow> rows;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(trim(cell));
    if (f.size() != (with_wall ? 9U : 8U)) throw ConfigError("line " + std::to_string(number), "wrong column count");
    ResultRow r;
    r.experiment = f[0];
    r.seed = parse_number<std::uint64_t>("seed", f[1]);
    r.strategy = f[2];
    r.prm = f[3];
    r.N = parse_number<int>("N", f[4]);
    r.trials = parse_number<int>("trials", f[5]);
    r.accuracy = parse_number<double>("accuracy", f[6]);
    r.mean_paths = parse_number<double>("mean_paths", f[7]);
    if (with_wall) r.mean_wall_ms = parse_number<double>("mean_wall_ms", f[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void emit_plot_data(std::ostream& out, std::span<const ResultRow> rows) {
  if (rows.empty()) throw EmptyResults();
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<const ResultRow*>> series;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.strategy, r.prm);
    auto [it, inserted] = series.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }
  out << "# catsearch plot data v1\n";
  out << "strategy prm N accuracy mean_paths\n";
  bool first = true;
  for (const auto& key : order) {
    auto& points = series[key];
    std::stable_sort(points.begin(), points.end(), [](auto* a, auto* b) { return a->N < b->N; });
    if (!first) out << '\n';
    first = false;
    for (const auto* r : points)
      out << r->strategy << ' ' << r->prm << ' ' << r->N << ' ' << fixed6(r->accuracy) << ' '
          << fixed6(r->mean_paths) << '\n';
  }
}

std::vector<PlotPoint> parse_plot_data(std::istream& in) {
  std::vector<PlotPoint> points;
  std::string line;
  bool header_seen = false;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    if (!header_seen) {
      if (text != "strategy prm N accuracy mean_paths")
        throw ConfigError("line " + std::to_string(number), "missing plot-data header");
      header_seen = true;
      continue;
    }
    std::istringstream ls(text);
    std::vector<std::string> f;
    for (std::string tok; ls >> tok;) f.push_back(tok);
    if (f.size() != 5) throw ConfigError("line " + std::to_string(number), "expected 5 columns");
    points.push_back({f[0], f[1], parse_number<int>("N", f[2]), parse_number<double>("accuracy", f[3]),
                      parse_number<double>("mean_paths", f[4])});
  }
  if (points.empty()) throw EmptyResults("plot data has no points");
  return points;
}

BudgetComparison compare_at_equal_budget(std::span<const ResultRow> rows, int cats_budget) {
  struct Cell {
    std::int64_t correct = 0;
    std::int64_t trials = 0;
    double paths = 0.0;  // trial-weighted sum
  };
  std::vector<std::pair<std::string, int>> order;
  std::map<std::pair<std::string, int>, Cell> cells;
  for (const auto& r : rows) {
    const auto key = std::make_pair(r.strategy, r.N);
    auto [it, inserted] = cells.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.correct += std::llround(r.accuracy * r.trials);
    it->second.trials += r.trials;
    it->second.paths += r.mean_paths * r.trials;
  }
  const auto cats_it = cells.find({"cats", cats_budget});
  if (cats_it == cells.end() || cats_it->second.trials == 0)
    throw EmptyResults("no CATS rows at budget " + std::to_string(cats_budget));

  BudgetComparison out;
  const auto& c = cats_it->second;
  out.cats_accuracy = static_cast<double>(c.correct) / c.trials;
  out.cats_paths = c.paths / c.trials;

  const Cell* best = nullptr;
  for (const auto& key : order) {
    if (key.first == "cats") continue;
    const auto& cell = cells[key];
    const double paths = cell.paths / cell.trials;
    if (paths > out.cats_paths + 1e-9) continue;
    // Compare accuracies as exact fractions.
    const bool better = best == nullptr || cell.correct * best->trials > best->correct * cell.trials;
    if (better) {
      best = &cell;
      out.best_baseline = key.first + "@" + std::to_string(key.second);
      out.baseline_accuracy = static_cast<double>(cell.correct) / cell.trials;
      out.baseline_paths = paths;
    }
  }
  out.cats_wins_or_ties = best == nullptr || c.correct * best->trials >= best->correct * c.trials;
  return out;
}

}  // namespace catsearch::harness
