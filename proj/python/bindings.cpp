#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "catsearch/cats.hpp"
#include "catsearch/harness.hpp"
#include "catsearch/prm.hpp"
#include "catsearch/search.hpp"
#include "catsearch/theory.hpp"

namespace py = pybind11;
using namespace catsearch;

namespace {

py::dict report_dict(const theory::BoundReport& r) {
  py::dict d;
  d["label"] = r.label;
  d["bound_value"] = r.bound_value;
  d["mc_estimate"] = r.mc_estimate;
  d["mc_stderr"] = r.mc_stderr;
  d["violated"] = r.violated;
  d["vacuous"] = r.vacuous;
  d["epsilon"] = r.inputs.epsilon;
  d["gamma_gap"] = r.inputs.gamma_gap;
  d["N"] = r.inputs.N;
  d["p_cov"] = r.inputs.p_cov;
  d["n"] = r.inputs.n;
  d["delta"] = r.inputs.delta;
  return d;
}

py::dict row_dict(const harness::ResultRow& r) {
  py::dict d;
  d["experiment"] = r.experiment;
  d["seed"] = r.seed;
  d["strategy"] = r.strategy;
  d["prm"] = r.prm;
  d["N"] = r.N;
  d["trials"] = r.trials;
  d["accuracy"] = r.accuracy;
  d["mean_paths"] = r.mean_paths;
  d["mean_wall_ms"] = r.mean_wall_ms;
  return d;
}

py::dict search_oracle(const env::SyntheticTask& task, const std::string& strategy, int n, double epsilon,
                       std::uint64_t noise_seed, int beam_width, const SamplingParams& sampling) {
  search::SearchConfig sc;
  sc.strategy = search::strategy_from_string(strategy);
  sc.n = n;
  sc.beam_width = beam_width;
  sc.sampling = sampling;
  sc.max_depth = task.depth;
  const prm::NoisyOraclePrm prm(epsilon, noise_seed);
  const env::SyntheticPolicy policy;
  auto ledger = BudgetLedger::for_paths(n, task.depth);
  const auto r = search::run_search(task, policy, prm, sc, ledger);
  py::dict d;
  d["answer"] = r.answer;
  d["correct"] = r.correct;
  d["prm_score"] = r.selected.prm_score;
  d["true_reward"] = r.selected.true_reward;
  d["units_consumed"] = r.units_consumed;
  d["paths_consumed"] = r.paths_consumed;
  d["candidates"] = r.all_candidates.size();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Test-time search, the CATS controller and bound verification";

  static py::exception<Error> base_error(m, "CatsearchError", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const Error& e) {
      py::set_error(base_error, e.what());
    }
  });

  py::class_<SamplingParams>(m, "SamplingParams")
      .def(py::init([](double temperature, int top_k, double top_p) {
             SamplingParams p{temperature, top_k, top_p};
             p.validate();
             return p;
           }),
           py::arg("temperature") = 1.0, py::arg("top_k") = 0, py::arg("top_p") = 1.0)
      .def_readwrite("temperature", &SamplingParams::temperature)
      .def_readwrite("top_k", &SamplingParams::top_k)
      .def_readwrite("top_p", &SamplingParams::top_p);

  py::enum_<env::StepModel>(m, "StepModel")
      .value("continuous", env::StepModel::kContinuous)
      .value("bernoulli", env::StepModel::kBernoulli);

  py::class_<env::SyntheticTask>(m, "SyntheticTask")
      .def(py::init([](double tau, double base_quality, int depth, int answer_space, AnswerId correct_answer,
                       env::StepModel model, std::uint64_t tree_seed) {
             env::SyntheticTask t;
             t.tau = tau;
             t.base_quality = base_quality;
             t.depth = depth;
             t.answer_space = answer_space;
             t.correct_answer = correct_answer;
             t.model = model;
             t.tree_seed = tree_seed;
             t.validate();
             return t;
           }),
           py::arg("tau") = 0.7, py::arg("base_quality") = 0.5, py::arg("depth") = 1, py::arg("answer_space") = 4,
           py::arg("correct_answer") = 0, py::arg("model") = env::StepModel::kContinuous,
           py::arg("tree_seed") = 0)
      .def_readwrite("tau", &env::SyntheticTask::tau)
      .def_readwrite("base_quality", &env::SyntheticTask::base_quality)
      .def_readwrite("depth", &env::SyntheticTask::depth)
      .def_readwrite("answer_space", &env::SyntheticTask::answer_space)
      .def_readwrite("correct_answer", &env::SyntheticTask::correct_answer)
      .def_readwrite("tree_seed", &env::SyntheticTask::tree_seed);

  m.def("coverage_probability",
        [](const env::SyntheticTask& task, const SamplingParams& params, int n, int trials, std::uint64_t seed) {
          return env::coverage_probability(task, params, n, trials, RngStream(seed, 0));
        },
        py::arg("task"), py::arg("params") = SamplingParams{}, py::arg("n") = 1, py::arg("trials") = 1000,
        py::arg("seed") = 0);

  m.def("search", &search_oracle, "Run one search strategy against a noisy oracle PRM", py::arg("task"),
        py::arg("strategy") = "best_of_n", py::arg("n") = 4, py::arg("epsilon") = 0.0, py::arg("noise_seed") = 0,
        py::arg("beam_width") = 4, py::arg("sampling") = SamplingParams{});

  // Bounds
  m.def("pac_bayes_bound", &theory::pac_bayes_bound, py::arg("kl"), py::arg("n"), py::arg("delta"));
  m.def("dirac_bound", &theory::dirac_bound, py::arg("prior_mass"), py::arg("n"), py::arg("delta"));
  m.def("misrank_term", &theory::misrank_term, py::arg("N"), py::arg("gamma_gap"), py::arg("epsilon"));
  m.def("accuracy_lower_bound", &theory::accuracy_lower_bound, py::arg("p_cov"), py::arg("delta"), py::arg("N"),
        py::arg("gamma_gap"), py::arg("epsilon"));
  m.def("coverage_requirement", &theory::coverage_requirement, py::arg("alpha"), py::arg("delta"), py::arg("N"),
        py::arg("gamma_gap"), py::arg("epsilon"));
  m.def("sparsity_bound", &prm::sparsity_bound, py::arg("nnz"), py::arg("d"), py::arg("n"), py::arg("delta"),
        py::arg("c"));

  m.def("verify_accuracy_bound",
        [](int trials, std::uint64_t seed, int jobs) {
          const auto grid = theory::default_accuracy_grid();
          py::list out;
          for (const auto& r : theory::verify_accuracy_bound(grid, trials, RngStream(seed, 0), jobs))
            out.append(report_dict(r));
          return out;
        },
        py::arg("trials") = 1000, py::arg("seed") = 1, py::arg("jobs") = 1);

  m.def("verify_pac_bayes",
        [](int class_size, std::int64_t n, double delta, int resamples, std::uint64_t seed) {
          theory::ThresholdProblem problem;
          problem.class_size = class_size;
          const auto o = theory::verify_pac_bayes(problem, n, delta, resamples, RngStream(seed, 0));
          auto d = report_dict(o.report);
          d["mean_gen_error"] = o.mean_gen_error;
          return d;
        },
        py::arg("class_size") = 64, py::arg("n") = 200, py::arg("delta") = 0.1, py::arg("resamples") = 1000,
        py::arg("seed") = 1);

  // Sparsity fixture
  m.def("spearman_rho", [](std::vector<double> x, std::vector<double> y) { return prm::spearman_rho(x, y); });
  m.def("spearman_rho_classic",
        [](std::vector<double> x, std::vector<double> y) { return prm::spearman_rho_classic(x, y); });
  m.def("load_sparsity_table", [](const std::filesystem::path& path) {
    py::list out;
    for (const auto& r : prm::load_sparsity_table(path)) {
      py::dict d;
      d["name"] = r.name;
      d["params_billions"] = r.params_billions;
      d["total_sparsity"] = r.total_sparsity;
      d["last_layer_sparsity"] = r.last_layer_sparsity;
      d["test_error"] = r.test_error;
      out.append(d);
    }
    return out;
  });

  // CATS primitives
  m.def("step_reward",
        [](int extra_samples, std::vector<double> retained, std::vector<double> discarded,
           std::vector<double> all_candidates, double lambda_c, double lambda_m, double lambda_r) {
          cats::ActionGrid grid;
          cats::CatsWeights w;
          w.lambda_c = lambda_c;
          w.lambda_m = lambda_m;
          w.lambda_r = lambda_r;
          return cats::step_reward({extra_samples, 1, 0}, grid, retained, discarded, all_candidates, w);
        },
        py::arg("extra_samples"), py::arg("retained"), py::arg("discarded"), py::arg("all_candidates"),
        py::arg("lambda_c") = 0.2, py::arg("lambda_m") = 0.5, py::arg("lambda_r") = 0.3);
  m.def("td_error", &cats::td_error, py::arg("reward"), py::arg("gamma"), py::arg("v_next"), py::arg("v_curr"),
        py::arg("terminal"));

  // Experiments
  m.def("run_experiment",
        [](const std::filesystem::path& config) {
          py::list out;
          std::vector<harness::ResultRow> rows;
          {
            py::gil_scoped_release release;
            rows = harness::run_experiment(harness::load_experiment(config));
          }
          for (const auto& r : rows) out.append(row_dict(r));
          return out;
        },
        py::arg("config"), "Run an experiment config file; returns one dict per result row");
  m.def("experiment_csv",
        [](const std::filesystem::path& config, bool include_wall_time) {
          std::vector<harness::ResultRow> rows;
          {
            py::gil_scoped_release release;
            rows = harness::run_experiment(harness::load_experiment(config));
          }
          std::ostringstream out;
          harness::write_csv(out, rows, include_wall_time);
          return out.str();
        },
        py::arg("config"), py::arg("include_wall_time") = false);
}
