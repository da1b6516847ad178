// catsearch command-line tool. Exit codes: 0 success, 1 configuration error,
// 2 runtime error, 3 a verify subcommand found a bound violation.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "catsearch/cats.hpp"
#include "catsearch/harness.hpp"
#include "catsearch/prm.hpp"
#include "catsearch/theory.hpp"

namespace {

using namespace catsearch;

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;
constexpr int kViolation = 3;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> trials;
  std::optional<int> jobs;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_config) {
  auto* opt = cmd->add_option("--config", f.config, "experiment config file");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "override the seed");
  cmd->add_option("--out", f.out, "output file (stdout when omitted)");
  cmd->add_option("--trials", f.trials, "override the trial count")->check(CLI::PositiveNumber);
  cmd->add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
}

harness::ExperimentConfig load(const CommonFlags& f) {
  auto config = harness::load_experiment(f.config);
  if (f.seed) config.seed = *f.seed;
  if (f.trials) config.trials = *f.trials;
  if (f.jobs) config.jobs = *f.jobs;
  config.validate();
  return config;
}

// Writes to --out, or stdout when it is empty.
template <typename Fn>
void with_output(const std::string& path, Fn&& fn) {
  if (path.empty()) {
    fn(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  fn(out);
}

int cmd_run(const CommonFlags& f) {
  const auto config = load(f);
  const auto rows = harness::run_experiment(config);
  with_output(f.out, [&](std::ostream& os) { harness::write_csv(os, rows); });
  return kOk;
}

int cmd_verify_thm2(const CommonFlags& f) {
  const int trials = f.trials.value_or(10000);
  const auto grid = theory::default_accuracy_grid();
  const auto reports = theory::verify_accuracy_bound(grid, trials, RngStream(f.seed.value_or(1), 0x74686d32), f.jobs.value_or(1));
  with_output(f.out, [&](std::ostream& os) { theory::write_reports_csv(os, reports); });
  int violations = 0;
  for (const auto& r : reports) violations += r.violated.value_or(false);
  std::cerr << "verify-thm2: " << reports.size() << " cells, " << violations << " violated\n";
  return violations > 0 ? kViolation : kOk;
}

int cmd_verify_pacbayes(const CommonFlags& f, std::int64_t n, double delta, int class_size) {
  theory::ThresholdProblem problem;
  problem.class_size = class_size;
  const auto outcome =
      theory::verify_pac_bayes(problem, n, delta, f.trials.value_or(1000), RngStream(f.seed.value_or(1), 0x7061630a));
  const theory::BoundReport reports[] = {outcome.report};
  with_output(f.out, [&](std::ostream& os) { theory::write_reports_csv(os, reports); });
  std::cerr << "verify-pacbayes: bound " << outcome.report.bound_value << ", exceedance "
            << outcome.report.mc_estimate.value_or(0.0) << ", mean gen error " << outcome.mean_gen_error << '\n';
  return outcome.report.violated.value_or(false) ? kViolation : kOk;
}

int cmd_train_cats(const CommonFlags& f, std::optional<int> episodes) {
  auto config = load(f);
  if (episodes) config.cats_episodes = *episodes;
  config.cats_checkpoint.reset();
  if (f.out.empty()) throw ConfigError("--out", "train-cats needs a checkpoint path");
  const auto backends = harness::make_backends(config);
  const auto result = harness::prepare_cats(config, backends);
  cats::save_agent(f.out, result.agent, config.cats);
  int correct = 0;
  const auto tail = std::min<std::size_t>(result.log.size(), 200);
  for (std::size_t i = result.log.size() - tail; i < result.log.size(); ++i) correct += result.log[i].correct;
  std::cerr << "train-cats: " << result.log.size() << " episodes, last " << tail << " correct " << correct << '\n';
  return kOk;
}

int cmd_infer_cats(const CommonFlags& f, const std::string& checkpoint) {
  auto config = load(f);
  auto [agent, cats_config] = cats::load_agent(checkpoint);
  config.cats = cats_config;
  config.strategies = {"cats"};
  const auto backends = harness::make_backends(config);
  const auto rows = harness::run_experiment(config, backends, &agent);
  with_output(f.out, [&](std::ostream& os) { harness::write_csv(os, rows); });
  return kOk;
}

int cmd_plot_data(const CommonFlags& f, const std::string& input) {
  std::ifstream in(input);
  if (!in) throw ConfigError("--input", "cannot read " + input);
  const auto rows = harness::read_csv(in);
  with_output(f.out, [&](std::ostream& os) { harness::emit_plot_data(os, rows); });
  return kOk;
}

int cmd_sparsity_report(const CommonFlags& f, const std::string& table) {
  const auto records = prm::load_sparsity_table(table);
  std::vector<double> total;
  std::vector<double> last;
  std::vector<double> error;
  for (const auto& r : records) {
    total.push_back(r.total_sparsity);
    last.push_back(r.last_layer_sparsity);
    error.push_back(r.test_error);
  }
  with_output(f.out, [&](std::ostream& os) {
    os << std::fixed << std::setprecision(6);
    os << "name,params_billions,total_sparsity,last_layer_sparsity,test_error\n";
    for (const auto& r : records)
      os << r.name << ',' << r.params_billions << ',' << r.total_sparsity << ',' << r.last_layer_sparsity << ','
         << r.test_error << '\n';
    os << "# spearman(total_sparsity, test_error) classic=" << prm::spearman_rho_classic(total, error)
       << " pearson_of_ranks=" << prm::spearman_rho(total, error) << '\n';
    os << "# spearman(last_layer_sparsity, test_error) classic=" << prm::spearman_rho_classic(last, error)
       << " pearson_of_ranks=" << prm::spearman_rho(last, error) << '\n';
  });
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time search, the CATS compute controller, and bound verification"};
  app.require_subcommand(1);

  CommonFlags run_f, thm2_f, pac_f, train_f, infer_f, plot_f, sparsity_f;
  auto* run = app.add_subcommand("run", "run a config's strategy/PRM/budget sweep and write CSV");
  add_common(run, run_f, true);

  auto* thm2 = app.add_subcommand("verify-thm2", "Monte Carlo check of the answer-accuracy bound");
  add_common(thm2, thm2_f, false);

  std::int64_t pac_n = 200;
  double pac_delta = 0.1;
  int pac_class = 64;
  auto* pac = app.add_subcommand("verify-pacbayes", "Monte Carlo check of the PAC-Bayes bound");
  add_common(pac, pac_f, false);
  pac->add_option("--n", pac_n, "training-set size")->check(CLI::Range(2, 100000000));
  pac->add_option("--delta", pac_delta, "confidence parameter");
  pac->add_option("--class-size", pac_class, "number of threshold hypotheses")->check(CLI::PositiveNumber);

  std::optional<int> episodes;
  auto* train = app.add_subcommand("train-cats", "train the controller and write a checkpoint to --out");
  add_common(train, train_f, true);
  train->add_option("--episodes", episodes, "override cats.episodes")->check(CLI::PositiveNumber);

  std::string checkpoint;
  auto* infer = app.add_subcommand("infer-cats", "evaluate a checkpoint on the config's tasks");
  add_common(infer, infer_f, true);
  infer->add_option("--checkpoint", checkpoint, "checkpoint from train-cats")->required()->check(CLI::ExistingFile);

  std::string plot_input;
  auto* plot = app.add_subcommand("plot-data", "convert a results CSV into plot data");
  add_common(plot, plot_f, false);
  plot->add_option("--input", plot_input, "results CSV")->required();

  std::string table = "data/prm_sparsity_table.csv";
  auto* sparsity = app.add_subcommand("sparsity-report", "rank correlation of PRM sparsity and test error");
  add_common(sparsity, sparsity_f, false);
  sparsity->add_option("--table", table, "sparsity table CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(run_f);
    if (*thm2) return cmd_verify_thm2(thm2_f);
    if (*pac) return cmd_verify_pacbayes(pac_f, pac_n, pac_delta, pac_class);
    if (*train) return cmd_train_cats(train_f, episodes);
    if (*infer) return cmd_infer_cats(infer_f, checkpoint);
    if (*plot) return cmd_plot_data(plot_f, plot_input);
    if (*sparsity) return cmd_sparsity_report(sparsity_f, table);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kRuntimeError;
}
