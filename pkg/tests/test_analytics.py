import numpy as np
import pytest

from helpers import random_data, random_params
from panel_bvecm import matrix_kit as mk
from panel_bvecm.analytics import (
    autocorrelation,
    companion,
    diagnostics,
    effective_sample_size,
    fevd,
    fevd_from_irf,
    information_criteria,
    irf,
    ma_coefficients,
    mcse,
    posterior_fevd,
    rank_profile,
    summarize,
    var_from_pi,
    vecm_to_var,
)
from panel_bvecm.errors import DimensionMismatch
from panel_bvecm.gibbs import ChainConfig, run_chain
from panel_bvecm.model import PanelSpec, pis_and_cs, split_C
from panel_bvecm.priors import PriorConfig
from panel_bvecm.simulator import simulate_levels


def test_var_from_pi_cases(rng):
    Pi = rng.standard_normal((2, 2))
    assert np.allclose(var_from_pi(Pi, [])[0], np.eye(2) + Pi)
    G = rng.standard_normal((2, 2))
    A = var_from_pi(Pi, [G])
    assert np.allclose(A[0], np.eye(2) + Pi + G) and np.allclose(A[1], -G)
    G2 = rng.standard_normal((2, 2))
    A = var_from_pi(Pi, [G, G2])
    assert np.allclose(A[1], G2 - G) and np.allclose(A[2], -G2)
    # sum of VAR matrices minus I recovers Pi
    assert np.allclose(sum(A) - np.eye(2), Pi)


def test_var_and_vecm_recursions_agree(rng):
    spec = PanelSpec(1, 3, 40, 2, 1, (1,))
    p = random_params(spec, rng, scale=0.2)
    Pis, Cs = pis_and_cs(p, spec)
    T0 = 40
    eps = rng.standard_normal((T0, 3))
    det = np.ones((T0, 1))
    init = rng.standard_normal((1, 3, 3))
    y = simulate_levels(Pis, Cs, 2, det, eps, init)[0]
    A = vecm_to_var(p, spec, 0)
    phi = split_C(Cs[0], spec)[1]
    for t in range(3, T0):
        pred = sum(A[j] @ y[t - 1 - j] for j in range(3)) + phi @ det[t] + eps[t]
        assert np.allclose(pred, y[t])
    with pytest.raises(DimensionMismatch):
        vecm_to_var(p, spec, 1)


def test_companion_and_ma(rng):
    A = [0.3 * rng.standard_normal((2, 2)) for _ in range(2)]
    psi = ma_coefficients(A, 6)
    F = companion(A)
    for h in range(6):
        assert np.allclose(np.linalg.matrix_power(F, h)[:2, :2], psi[h])


def test_irf_impact_is_cholesky(rng):
    spec = PanelSpec(2, 2, 20, 1, 1, (1, 1))
    p = random_params(spec, rng)
    theta = irf(p, spec, 5)
    assert theta.shape == (2, 6, 2, 2)
    for i in range(2):
        sl = slice(2 * i, 2 * i + 2)
        assert np.allclose(theta[i, 0], np.linalg.cholesky(p.Sigma[sl, sl]))


def test_fevd_identity_var():
    # A = 0 and Sigma = I: only the own shock matters at every horizon
    theta = np.zeros((4, 3, 3))
    theta[0] = np.eye(3)
    shares = fevd_from_irf(theta)
    assert np.allclose(shares, np.broadcast_to(np.eye(3), (4, 3, 3)))


def test_fevd_hand_oracle():
    # y_t = a y_{t-1} + u, Sigma with correlation c, univariate check via n=2
    S = np.array([[1.0, 0.5], [0.5, 2.0]])
    P = np.linalg.cholesky(S)
    A = [np.diag([0.5, 0.0])]
    theta = ma_coefficients(A, 2) @ P
    sh = fevd_from_irf(theta)
    # one step: variable 1 is pure shock 1
    assert sh[0, 0, 0] == pytest.approx(1.0)
    # variable 2 at one step: P[1,0]^2 / S[1,1]
    assert sh[0, 1, 0] == pytest.approx(P[1, 0] ** 2 / 2.0)
    # two steps, variable 2 (A has zero second row): same as one step
    assert sh[1, 1, 0] == pytest.approx(P[1, 0] ** 2 / 2.0)


def test_fevd_rows_sum_to_one(rng):
    spec = PanelSpec(2, 3, 20, 1, 1, (1, 2))
    p = random_params(spec, rng)
    res = fevd(p, spec, 8)
    assert np.allclose(res.shares.sum(axis=-1), 1)
    assert np.all(res.shares >= 0)
    rows = list(res.rows(["a", "b"]))
    assert len(rows) == 2 * 8 * 3 * 3 and rows[0][:4] == ("a", 1, "y1", "y1")
    with pytest.raises(ValueError):
        fevd(p, spec, 0)


def _chain(rng, iterations=60):
    spec = PanelSpec(2, 2, 40, 1, 1, (1, 1))
    data = random_data(spec, rng)
    chain = run_chain(data, spec, PriorConfig(Hg=np.array([[1.0], [-1.0]])),
                      ChainConfig(warmup=20, iterations=iterations, seed=3))
    return spec, data, chain


def test_posterior_fevd(rng):
    spec, data, chain = _chain(rng)
    mean, lo, hi = posterior_fevd(chain, 4, max_draws=20)
    assert np.allclose(mean.shares.sum(axis=-1), 1)
    assert np.all(lo <= mean.shares + 1e-12) and np.all(mean.shares <= hi + 1e-12)


def test_information_criteria_one_draw(rng):
    spec, data, chain = _chain(rng, iterations=1)
    ic = information_criteria(chain, data)
    # with a single draw the posterior mean is the draw itself
    assert ic["p_d"] == pytest.approx(0.0, abs=1e-8)
    assert ic["loglik_at_mean"] == pytest.approx(chain.loglik[0], abs=1e-8)
    assert ic["p_waic"] == 0.0
    assert ic["lppd"] == pytest.approx(chain.loglik[0], abs=1e-8)


def test_information_criteria_penalties(rng):
    spec, data, chain = _chain(rng)
    ic = information_criteria(chain, data)
    assert ic["p_waic"] >= 0
    assert ic["n_params"] == spec.criteria_parameter_count()
    assert ic["bic"] > ic["aic"]
    assert np.isfinite(ic["dic"]) and np.isfinite(ic["waic"])


def test_rank_profile_shape(rng):
    spec, data, _ = _chain(rng, iterations=5)
    rows = rank_profile(data, 1, PriorConfig(), ChainConfig(warmup=5, iterations=10), [2, 0, 1])
    assert [r["rank"] for r in rows] == [0, 1, 2]
    assert all(np.isfinite(r["mean_loglik"]) for r in rows)


# -- diagnostics ------------------------------------------------------------


def test_autocorrelation_lag0():
    x = np.random.default_rng(0).standard_normal(100)
    assert autocorrelation(x)[0] == pytest.approx(1.0)


def test_ess_iid(rng):
    x = rng.standard_normal(20000)
    assert 0.85 * x.size < effective_sample_size(x) <= x.size


def test_ess_ar1(rng):
    phi = 0.8
    e = rng.standard_normal(100_000)
    x = np.empty_like(e)
    x[0] = e[0]
    for t in range(1, x.size):
        x[t] = phi * x[t - 1] + e[t]
    expected = x.size * (1 - phi) / (1 + phi)
    assert abs(effective_sample_size(x) / expected - 1) < 0.15


def test_ess_constant_and_short():
    assert effective_sample_size(np.ones(50)) == 50
    assert effective_sample_size(np.array([1.0, 2.0])) == 2


def test_mcse_scaling(rng):
    a = mcse(rng.standard_normal(4000))
    b = mcse(rng.standard_normal(16000))
    assert a / b == pytest.approx(2.0, rel=0.15)


def test_summarize_and_diagnostics(rng):
    spec, data, chain = _chain(rng)
    rows = summarize(chain)
    names = [r["parameter"] for r in rows]
    assert "Pi[1][1,1]" in names and "Gamma[2,1][2,2]" in names and "Sigma[4,4]" in names
    assert all(r["q2.5"] <= r["mean"] <= r["q97.5"] for r in rows if r["sd"] > 0)
    rep = diagnostics(chain, data, rng=np.random.default_rng(0), ppp_draws=30)
    assert 0 <= rep.ppp <= 1
    assert np.all(rep.r2_draws <= 1)
    d = rep.to_dict()
    assert set(d) == {"ess", "mcse", "r2", "loglik", "ppp"}
