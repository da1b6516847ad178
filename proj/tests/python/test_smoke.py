import math
import os
from pathlib import Path

import pytest

import catsearch

SOURCE = Path(os.environ.get("CATSEARCH_SOURCE_DIR", Path(__file__).resolve().parents[2]))


def test_closed_forms():
    assert catsearch.pac_bayes_bound(0.0, 101, 0.01) == pytest.approx(math.sqrt(math.log(101 / 0.01) / 200))
    assert catsearch.misrank_term(2, 0.4, 0.1) == pytest.approx(math.exp(-2.0))
    assert catsearch.coverage_requirement(0.8, 0.05, 2, 0.4, 0.1) == pytest.approx(0.8 / (0.95 - math.exp(-2.0)))
    assert catsearch.dirac_bound(1.0, 101, 0.01) == pytest.approx(catsearch.pac_bayes_bound(0.0, 101, 0.01))


def test_search_result_shape():
    task = catsearch.SyntheticTask(depth=3, tau=0.6, base_quality=0.6, tree_seed=9)
    r = catsearch.search(task, strategy="beam_search", n=8, epsilon=0.05, beam_width=4)
    assert r["units_consumed"] == 8 * 3
    assert 0.0 <= r["prm_score"] <= 1.0
    assert isinstance(r["correct"], bool)


def test_exact_oracle_picks_the_best_path():
    task = catsearch.SyntheticTask(depth=2, tree_seed=3)
    single = catsearch.search(task, n=1, epsilon=0.0)
    best = catsearch.search(task, n=16, epsilon=0.0)
    assert best["true_reward"] >= single["true_reward"]


def test_spearman_on_fixture():
    rows = catsearch.load_sparsity_table(SOURCE / "data" / "prm_sparsity_table.csv")
    s = [r["total_sparsity"] for r in rows]
    e = [r["test_error"] for r in rows]
    assert len(rows) == 5
    assert catsearch.spearman_rho_classic(s, e) == pytest.approx(-0.6, abs=1e-12)
    assert catsearch.spearman_rho(s, e) <= -0.5


def test_config_errors_are_value_errors():
    assert issubclass(catsearch.ConfigError, ValueError)
    with pytest.raises(catsearch.ConfigError):
        catsearch.run_experiment(SOURCE / "configs" / "invalid.cfg")
    with pytest.raises(catsearch.ConfigError):
        catsearch.SamplingParams(temperature=-1.0)


def test_run_experiment_on_smoke_config():
    rows = catsearch.run_experiment(SOURCE / "configs" / "smoke.cfg")
    assert len(rows) == 3 * 2 * 3
    assert all(0.0 <= r["accuracy"] <= 1.0 for r in rows)
    csv = catsearch.experiment_csv(SOURCE / "configs" / "smoke.cfg")
    assert csv.splitlines()[0] == "experiment,seed,strategy,prm,N,trials,accuracy,mean_paths"
    assert csv == catsearch.experiment_csv(SOURCE / "configs" / "smoke.cfg")


def test_reward_and_td():
    assert catsearch.td_error(1.0, 0.9, 5.0, 0.25, True) == pytest.approx(0.75)
    r = catsearch.step_reward(0, [0.8], [0.2], [0.8, 0.2], lambda_c=0.0, lambda_m=1.0, lambda_r=0.0)
    assert r == pytest.approx(0.6)
