import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from panel_bvecm.errors import EmptyChain, Unstable
from panel_bvecm.gibbs import ChainConfig, run_chain
from panel_bvecm.model import PanelSpec, deterministic_terms, pis_and_cs
from panel_bvecm.priors import PriorConfig
from panel_bvecm.simulator import (
    Scenario,
    TruthFixture,
    accuracy_report,
    check_stable,
    construct_truth,
    equicorrelated_sigma,
    group_accuracy,
    load_default_truth,
    run_study,
    simulate_errors,
    simulate_levels,
    simulate_panel,
    truth_params,
)


def test_default_truth_invariants():
    f = load_default_truth()
    assert (f.N, f.n, f.L, tuple(f.ranks)) == (3, 4, 1, (1, 2, 1))
    spec = f.spec(100)
    f.params.check(spec)
    check_stable(f.params, spec, exact_roots=True)
    H = f.Hg / np.linalg.norm(f.Hg, axis=0)
    for b in f.betas:
        bo = b / np.linalg.norm(b, axis=0)
        # betas lie in sp(Hg)
        assert np.allclose(H @ np.linalg.lstsq(H, bo, rcond=None)[0], bo, atol=1e-10)
    S = f.params.Sigma
    assert np.allclose(np.diag(S), 1) and np.linalg.eigvalsh(S).min() > 0


def test_fixture_json_roundtrip(tmp_path):
    f = construct_truth(2, 3, 1, (1, 2), None, seed=3)
    f.save(tmp_path / "t.json")
    g = TruthFixture.load(tmp_path / "t.json")
    assert np.allclose(g.params.b, f.params.b) and np.allclose(g.params.b_beta_star, f.params.b_beta_star)
    assert json.loads((tmp_path / "t.json").read_text())["ranks"] == [1, 2]


def test_construct_truth_deterministic():
    a = construct_truth(2, 3, 1, (1, 1), None, seed=11)
    b = construct_truth(2, 3, 1, (1, 1), None, seed=11)
    assert np.array_equal(a.params.b, b.params.b)


def test_check_stable_rejects_explosive():
    spec = PanelSpec(1, 2, 10, 0, 1, (1,))
    p = truth_params([np.array([[0.5], [0.0]])], [np.array([[1.0], [0.0]])], [[]],
                     [np.zeros((2, 1))], np.eye(2))
    with pytest.raises(Unstable):
        check_stable(p, spec)


def test_equicorrelated_sigma():
    S = equicorrelated_sigma(2, 2)
    assert S[0, 1] == 0.3 and S[0, 2] == 0.15 and S[0, 0] == 1.0


def test_random_walk_case(rng):
    # Pi = 0, no lags, no drift: levels are cumulative sums of the errors.
    eps = rng.standard_normal((50, 2))
    y = simulate_levels([np.zeros((2, 2))], [np.zeros((1, 2))], 0, np.ones((50, 1)), eps)
    assert np.allclose(y[0, 1:], np.cumsum(eps[1:], axis=0))


def test_error_cross_covariance(rng):
    S = equicorrelated_sigma(2, 2)
    e = simulate_errors(S, 5000, rng)
    C = np.cov(e.T)
    assert np.max(np.abs(C - S)) < 0.08


def test_error_time_correlation(rng):
    e = simulate_errors(np.eye(1), 20000, rng, rho=0.6)
    assert abs(np.corrcoef(e[1:, 0], e[:-1, 0])[0, 1] - 0.6) < 0.03
    assert abs(e.var() - 1) < 0.1


def test_cointegrating_relation_is_stationary(rng):
    f = construct_truth(1, 3, 1, (1,), None, seed=5)
    sc = Scenario("t", 4000, 1, 3, 1, f.params, (1,), 0)
    data = simulate_panel(sc, rng)
    beta = f.betas[0]
    z = data.levels[0] @ beta
    # the equilibrium error stays bounded while the levels wander
    assert z[2000:].var() < 3 * z[:2000].var() + 1
    assert data.levels[0].var(axis=0).max() > 10 * z.var()


def test_simulate_panel_reproducible():
    sc = Scenario.named("short", load_default_truth(), seed=4)
    a = simulate_panel(sc, np.random.default_rng(4))
    b = simulate_panel(sc, np.random.default_rng(4))
    assert np.array_equal(a.levels, b.levels)
    assert a.levels.shape == (3, 30 + 1 + 1, 4)


def test_scenario_names():
    f = load_default_truth()
    assert Scenario.named("extreme", f).T == 300
    assert Scenario.named("moderate", f).T == 100
    with pytest.raises(ValueError):
        Scenario.named("tiny", f)


# -- metrics -------------------------------------------------------------


def test_group_accuracy_degenerate_chain():
    truth = np.array([1.0, -2.0, 0.5])
    draws = np.tile(truth, (10, 1))
    acc = group_accuracy(truth, draws)
    assert acc.coverage == 1.0 and acc.rmse == 0 and acc.mae == 0 and acc.avg_ci_length == 0


def test_group_accuracy_offset():
    truth = np.zeros(4)
    draws = np.tile(np.full(4, 0.25), (20, 1))
    acc = group_accuracy(truth, draws)
    assert acc.bias == pytest.approx(-0.25) and acc.rmse == pytest.approx(0.25)
    assert acc.coverage == 0.0


def test_group_accuracy_two_draws():
    truth = np.array([0.0])
    draws = np.array([[-1.0], [3.0]])
    acc = group_accuracy(truth, draws)
    assert acc.bias == pytest.approx(-1.0) and acc.rmse == pytest.approx(1.0)
    assert acc.avg_ci_length == pytest.approx(np.quantile([-1, 3], 0.975) - np.quantile([-1, 3], 0.025))
    assert acc.coverage == 1.0


@given(arrays(float, 6, elements=st.floats(-5, 5)), arrays(float, (7, 6), elements=st.floats(-5, 5)))
def test_metric_orderings(truth, draws):
    acc = group_accuracy(truth, draws)
    assert acc.rmse + 1e-12 >= acc.mae >= abs(acc.bias) - 1e-12
    assert acc.avg_ci_length >= 0 and 0 <= acc.coverage <= 1


def test_accuracy_report_and_empty_chain(rng):
    f = construct_truth(2, 2, 1, (1, 1), np.array([[1.0], [-1.0]]), seed=2)
    sc = Scenario("s", 60, 2, 2, 1, f.params, (1, 1), 0)
    data = simulate_panel(sc, rng)
    chain = run_chain(data, sc.spec, PriorConfig(Hg=f.Hg), ChainConfig(warmup=50, iterations=100))
    rep = accuracy_report(f.params, chain)
    assert set(rep.groups) == {"Gamma", "Pi"}
    assert rep.groups["Gamma"].count == 8 and rep.groups["Pi"].count == 8
    assert len(list(rep.rows("s"))) == 10
    empty = run_chain(data, sc.spec, PriorConfig(), ChainConfig(warmup=0, iterations=1))
    empty.b = empty.b[:0]
    for a in ("Sigma", "b_beta_star", "nu", "tau", "rho", "loglik"):
        setattr(empty, a, getattr(empty, a)[:0])
    with pytest.raises(EmptyChain):
        accuracy_report(f.params, empty)


def test_run_study_records_failures():
    f = construct_truth(1, 2, 0, (1,), None, seed=1)
    good = Scenario("good", 40, 1, 2, 0, f.params, (1,), 0)
    bad = Scenario("bad", 2, 1, 2, 0, f.params, (1,), 0)
    res = run_study([good, bad], PriorConfig(), ChainConfig(warmup=5, iterations=20))
    assert "good" in res.reports and "bad" in res.errors
    assert {r["group"] for r in res.rows()} == {"Gamma", "Pi"}


def test_group_accuracy_symmetric_two_draws():
    # posterior mean equals the truth, so every error-based metric is zero
    acc = group_accuracy(np.array([0.7]), np.array([[0.7 - 0.2], [0.7 + 0.2]]))
    assert acc.bias == pytest.approx(0.0) and acc.rmse == pytest.approx(0.0)
    assert acc.coverage == 1.0
