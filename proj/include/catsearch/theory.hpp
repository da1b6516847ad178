#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "catsearch/core.hpp"

namespace catsearch::theory {

/// Every symbol any bound here consumes. Fields a bound does not use keep
/// their defaults.
struct BoundInputs {
  std::int64_t n = 2;      // training-set size
  double delta = 0.05;     // confidence parameter
  double kl = 0.0;         // KL(posterior || prior)
  double epsilon = 0.1;    // PRM deviation bound
  double gamma_gap = 0.0;  // reward gap between best and runner-up
  int N = 1;               // candidate count
  double p_cov = 1.0;      // coverage probability
  double alpha = 0.5;      // target accuracy
};

struct BoundReport {
  std::string label;
  BoundInputs inputs;
  double bound_value = 0.0;
  std::optional<double> mc_estimate;
  std::optional<double> mc_stderr;
  std::optional<bool> violated;  // set only alongside mc_estimate
  bool vacuous = false;          // bound carries no information (<= 0)
};

// ---------------------------------------------------------------------------
// Closed-form evaluators

/// sqrt((kl + ln(n / delta)) / (2 (n - 1))). Throws InvalidSampleSize if n < 2.
double pac_bayes_bound(double kl, std::int64_t n, double delta);

/// Point-mass posterior: KL collapses to ln(1 / prior_mass).
double dirac_bound(double prior_mass, std::int64_t n, double delta);

/// (N - 1) exp(-gamma^2 / (8 epsilon^2)). epsilon = 0 with gamma > 0 is the
/// noise-free limit and returns 0; gamma = epsilon = 0 throws DegenerateInputs.
double misrank_term(int N, double gamma_gap, double epsilon);

/// p_cov (1 - delta - misrank_term). May be negative; see is_vacuous().
double accuracy_lower_bound(double p_cov, double delta, int N, double gamma_gap, double epsilon);

/// Minimum coverage needed for accuracy alpha. Throws VacuousBound when
/// 1 - delta - misrank_term <= 0.
double coverage_requirement(double alpha, double delta, int N, double gamma_gap, double epsilon);

inline bool is_vacuous(double bound) { return !(bound > 0.0); }

// ---------------------------------------------------------------------------
// Monte Carlo verification of the answer-accuracy bound

struct GapGridPoint {
  double epsilon = 0.1;
  double gamma = 0.2;  // forced minimum gap between best and runner-up
  int N = 2;
  double tau = 0.7;
  double delta = 0.01;
};

/// epsilon {0.02, 0.05, 0.1} x gamma {0.2, 0.4} x N {2, 8, 32}.
std::vector<GapGridPoint> default_accuracy_grid();

/// Outcome of one Best-of-N draw in the forced-gap environment.
struct GapTrial {
  bool covered = false;
  bool correct = false;
  double gap = 0.0;
};

/// Draws N depth-1 paths whose true rewards are (1 - gamma) u_i for
/// u_i ~ U(0, 1), with gamma added to the largest; so the realized gap is
/// never below gamma. Scores them with a NoisyOraclePrm of deviation
/// epsilon and selects the best.
GapTrial run_gap_trial(const GapGridPoint& point, RngStream rng, std::uint64_t noise_seed);

BoundReport verify_accuracy_point(const GapGridPoint& point, int trials, RngStream rng);

/// One report per grid point. A point is violated iff empirical accuracy is
/// below the bound minus three Monte Carlo standard errors; vacuous points
/// never are. Points run on up to `jobs` threads; results are order-stable.
std::vector<BoundReport> verify_accuracy_bound(std::span<const GapGridPoint> grid, int trials, RngStream rng,
                                               int jobs = 1);

// ---------------------------------------------------------------------------
// Monte Carlo verification of the PAC-Bayes bound (point-mass posterior)

/// Threshold classifiers h_j(x) = [x >= (j + 0.5) / class_size] on x ~ U(0,1),
/// labels [x >= boundary] flipped with probability label_noise. The population
/// risk of threshold t is label_noise + (1 - 2 label_noise) |t - boundary|.
struct ThresholdProblem {
  int class_size = 64;
  double boundary = 0.5;
  double label_noise = 0.1;

  double threshold(int j) const { return (j + 0.5) / class_size; }
  double population_risk(int j) const;
};

struct PacBayesOutcome {
  BoundReport report;  // mc_estimate = fraction of resamples above the bound
  double mean_gen_error = 0.0;
};

/// Draws `resamples` training sets of size n, picks the empirical risk
/// minimizer (ties to the smallest threshold) and compares its generalization
/// error against dirac_bound(1 / class_size, n, delta). Violated iff the
/// exceedance fraction is above delta + 3 binomial standard errors.
PacBayesOutcome verify_pac_bayes(const ThresholdProblem& problem, std::int64_t n, double delta, int resamples,
                                 RngStream rng);

/// Columns: label, the BoundInputs fields, bound_value, mc_estimate,
/// mc_stderr, violated, vacuous. Missing optionals are empty cells.
void write_reports_csv(std::ostream& out, std::span<const BoundReport> reports);

}  // namespace catsearch::theory
