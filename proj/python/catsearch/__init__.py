"""Test-time search strategies, the CATS compute controller and bound verification."""

from ._core import (
    CatsearchError,
    ConfigError,
    SamplingParams,
    StepModel,
    SyntheticTask,
    accuracy_lower_bound,
    coverage_probability,
    coverage_requirement,
    dirac_bound,
    experiment_csv,
    load_sparsity_table,
    misrank_term,
    pac_bayes_bound,
    run_experiment,
    search,
    sparsity_bound,
    spearman_rho,
    spearman_rho_classic,
    step_reward,
    td_error,
    verify_accuracy_bound,
    verify_pac_bayes,
)

__all__ = [
    "CatsearchError",
    "ConfigError",
    "SamplingParams",
    "StepModel",
    "SyntheticTask",
    "accuracy_lower_bound",
    "coverage_probability",
    "coverage_requirement",
    "dirac_bound",
    "experiment_csv",
    "load_sparsity_table",
    "misrank_term",
    "pac_bayes_bound",
    "run_experiment",
    "search",
    "sparsity_bound",
    "spearman_rho",
    "spearman_rho_classic",
    "step_reward",
    "td_error",
    "verify_accuracy_bound",
    "verify_pac_bayes",
]
