#include "catsearch/theory.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "catsearch/env.hpp"
#include "catsearch/parallel.hpp"
#include "catsearch/prm.hpp"
#include "catsearch/search.hpp"

namespace catsearch::theory {

double pac_bayes_bound(double kl, std::int64_t n, double delta) {
  if (n < 2) throw InvalidSampleSize();
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta", "must lie in (0, 1]");
  if (kl < 0.0) throw ConfigError("kl", "must be non-negative");
  const auto nn = static_cast<double>(n);
  return std::sqrt((kl + std::log(nn / delta)) / (2.0 * (nn - 1.0)));
}

double dirac_bound(double prior_mass, std::int64_t n, double delta) {
  if (!(prior_mass > 0.0 && prior_mass <= 1.0)) throw InvalidPrior();
  return pac_bayes_bound(std::log(1.0 / prior_mass), n, delta);
}

double misrank_term(int N, double gamma_gap, double epsilon) {
  if (N < 1) throw ConfigError("N", "must be positive");
  if (epsilon < 0.0 || gamma_gap < 0.0) throw ConfigError("misrank", "epsilon and gamma must be non-negative");
  if (epsilon == 0.0) {
    if (gamma_gap == 0.0) throw DegenerateInputs();
    return 0.0;
  }
  return (N - 1) * std::exp(-(gamma_gap * gamma_gap) / (8.0 * epsilon * epsilon));
}

double accuracy_lower_bound(double p_cov, double delta, int N, double gamma_gap, double epsilon) {
  if (!(p_cov >= 0.0 && p_cov <= 1.0)) throw ConfigError("p_cov", "must lie in [0, 1]");
  return p_cov * (1.0 - delta - misrank_term(N, gamma_gap, epsilon));
}

double coverage_requirement(double alpha, double delta, int N, double gamma_gap, double epsilon) {
  const double denom = 1.0 - delta - misrank_term(N, gamma_gap, epsilon);
  if (!(denom > 0.0)) throw VacuousBound();
  return alpha / denom;
}

std::vector<GapGridPoint> default_accuracy_grid() {
  std::vector<GapGridPoint> grid;
  for (double eps : {0.02, 0.05, 0.1})
    for (double gamma : {0.2, 0.4})
      for (int n : {2, 8, 32}) grid.push_back({eps, gamma, n});
  return grid;
}

GapTrial run_gap_trial(const GapGridPoint& point, RngStream rng, std::uint64_t noise_seed) {
  env::SyntheticTask task;
  task.question_id = "gap";
  task.tau = point.tau;
  task.depth = 1;
  task.answer_space = 4;
  task.correct_answer = static_cast<AnswerId>(rng.below(4));
  task.tree_seed = rng.next();
  const prm::NoisyOraclePrm prm(point.epsilon, noise_seed);

  std::vector<double> latent(static_cast<std::size_t>(point.N));
  for (double& u : latent) u = rng.uniform();
  const auto best = static_cast<std::size_t>(std::max_element(latent.begin(), latent.end()) - latent.begin());

  const auto root = env::root_path(task);
  std::vector<ScoredCandidate> candidates;
  std::vector<double> rewards;
  for (std::size_t i = 0; i < latent.size(); ++i) {
    ReasoningPath path = root;
    Step step;
    step.key = env::child_stream(task, root, i).next();
    step.quality = (1.0 - point.gamma) * latent[i] + (i == best ? point.gamma : 0.0);
    path.steps.push_back(step);
    path = env::finalize(task, std::move(path));
    ScoredCandidate c;
    c.true_reward = step.quality;
    c.prm_score = prm.score(task, path);
    c.path = std::move(path);
    c.candidate_index = i;
    rewards.push_back(step.quality);
    candidates.push_back(std::move(c));
  }

  GapTrial out;
  out.covered = rewards[best] >= task.tau;
  out.correct = select_best(candidates).path.answer == task.correct_answer;
  out.gap = point.N >= 2 ? search::reward_gap(candidates) : 0.0;
  return out;
}

BoundReport verify_accuracy_point(const GapGridPoint& point, int trials, RngStream rng) {
  if (trials < 1) throw ConfigError("trials", "must be positive");
  const std::uint64_t noise_seed = rng.next();
  int covered = 0;
  int correct = 0;
  double min_gap = std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    const auto trial = run_gap_trial(point, rng.derive(static_cast<std::uint64_t>(t)), mix64(noise_seed, t));
    covered += trial.covered;
    correct += trial.correct;
    min_gap = std::min(min_gap, trial.gap);
  }
  if (point.N < 2) min_gap = point.gamma;

  BoundReport r;
  std::ostringstream label;
  label << "accuracy eps=" << point.epsilon << " gamma=" << point.gamma << " N=" << point.N;
  r.label = label.str();
  r.inputs.delta = point.delta;
  r.inputs.epsilon = point.epsilon;
  r.inputs.gamma_gap = min_gap;
  r.inputs.N = point.N;
  r.inputs.p_cov = static_cast<double>(covered) / trials;
  r.bound_value = accuracy_lower_bound(r.inputs.p_cov, point.delta, point.N, min_gap, point.epsilon);
  r.vacuous = is_vacuous(r.bound_value);
  const double acc = static_cast<double>(correct) / trials;
  r.mc_estimate = acc;
  r.mc_stderr = std::sqrt(acc * (1.0 - acc) / trials);
  r.violated = !r.vacuous && acc < r.bound_value - 3.0 * *r.mc_stderr;
  return r;
}

std::vector<BoundReport> verify_accuracy_bound(std::span<const GapGridPoint> grid, int trials, RngStream rng,
                                               int jobs) {
  std::vector<BoundReport> reports(grid.size());
  parallel_for(grid.size(), jobs, [&](std::size_t i) {
    reports[i] = verify_accuracy_point(grid[i], trials, rng.derive(i));
  });
  return reports;
}

double ThresholdProblem::population_risk(int j) const {
  return label_noise + (1.0 - 2.0 * label_noise) * std::abs(threshold(j) - boundary);
}

PacBayesOutcome verify_pac_bayes(const ThresholdProblem& problem, std::int64_t n, double delta, int resamples,
                                 RngStream rng) {
  if (problem.class_size < 1) throw ConfigError("class_size", "must be positive");
  if (resamples < 1) throw ConfigError("resamples", "must be positive");
  const double bound = dirac_bound(1.0 / problem.class_size, n, delta);

  std::vector<double> xs(static_cast<std::size_t>(n));
  std::vector<int> ys(static_cast<std::size_t>(n));
  int exceed = 0;
  double gen_total = 0.0;
  for (int r = 0; r < resamples; ++r) {
    auto draw = rng.derive(static_cast<std::uint64_t>(r));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      xs[i] = draw.uniform();
      int y = xs[i] >= problem.boundary ? 1 : 0;
      if (draw.bernoulli(problem.label_noise)) y = 1 - y;
      ys[i] = y;
    }
    int best = 0;
    std::int64_t best_errors = std::numeric_limits<std::int64_t>::max();
    for (int j = 0; j < problem.class_size; ++j) {
      const double t = problem.threshold(j);
      std::int64_t errors = 0;
      for (std::size_t i = 0; i < xs.size(); ++i) errors += ((xs[i] >= t ? 1 : 0) != ys[i]);
      if (errors < best_errors) {
        best_errors = errors;
        best = j;
      }
    }
    const double gen = problem.population_risk(best) - static_cast<double>(best_errors) / static_cast<double>(n);
    gen_total += gen;
    exceed += gen > bound;
  }

  PacBayesOutcome out;
  auto& rep = out.report;
  rep.label = "pac-bayes class=" + std::to_string(problem.class_size) + " n=" + std::to_string(n);
  rep.inputs.n = n;
  rep.inputs.delta = delta;
  rep.inputs.kl = std::log(static_cast<double>(problem.class_size));
  rep.bound_value = bound;
  const double frac = static_cast<double>(exceed) / resamples;
  rep.mc_estimate = frac;
  rep.mc_stderr = std::sqrt(delta * (1.0 - delta) / resamples);
  rep.violated = frac > delta + 3.0 * *rep.mc_stderr;
  out.mean_gen_error = gen_total / resamples;
  return out;
}

void write_reports_csv(std::ostream& out, std::span<const BoundReport> reports) {
  out << "label,n,delta,kl,epsilon,gamma_gap,N,p_cov,alpha,bound_value,mc_estimate,mc_stderr,violated,vacuous\n";
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(6);
  for (const auto& r : reports) {
    const auto& in = r.inputs;
    out << '"' << r.label << "\"," << in.n << ',' << in.delta << ',' << in.kl << ',' << in.epsilon << ','
        << in.gamma_gap << ',' << in.N << ',' << in.p_cov << ',' << in.alpha << ',' << r.bound_value << ',';
    if (r.mc_estimate) out << *r.mc_estimate;
    out << ',';
    if (r.mc_stderr) out << *r.mc_stderr;
    out << ',';
    if (r.violated) out << (*r.violated ? "true" : "false");
    out << ',' << (r.vacuous ? "true" : "false") << '\n';
  }
  out.flags(flags);
}

}  // namespace catsearch::theory
