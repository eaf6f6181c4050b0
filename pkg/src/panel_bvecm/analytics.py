"""Post-fit analytics: VAR recovery, IRF/FEVD, information criteria,
rank profiling and chain diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from . import matrix_kit as mk
from .errors import DimensionMismatch, EmptyChain
from .model import (
    GramCache,
    PanelData,
    PanelSpec,
    VecmParams,
    design,
    loglik_residuals,
    pis_and_cs,
    pointwise_loglik,
    residuals_from,
    split_C,
)


# -- VAR recovery, IRF and FEVD ------------------------------------------


def var_from_pi(Pi: np.ndarray, gammas: Sequence[np.ndarray]) -> list:
    """Level-VAR matrices ``A_1..A_{L+1}`` of a VECM with ``Pi`` and ``Gamma_h``."""
    n = Pi.shape[0]
    L = len(gammas)
    if L == 0:
        return [np.eye(n) + Pi]
    A = [np.eye(n) + Pi + gammas[0]]
    for h in range(1, L):
        A.append(gammas[h] - gammas[h - 1])
    A.append(-gammas[-1])
    return A


def vecm_to_var(params: VecmParams, spec: PanelSpec, individual: int) -> list:
    if not 0 <= individual < spec.N:
        raise DimensionMismatch(f"individual {individual} outside 0..{spec.N - 1}")
    Pis, Cs = pis_and_cs(params, spec)
    gammas, _ = split_C(Cs[individual], spec)
    return var_from_pi(Pis[individual], gammas)


def companion(As: Sequence[np.ndarray]) -> np.ndarray:
    n = As[0].shape[0]
    p = len(As)
    top = np.hstack(As)
    if p == 1:
        return top
    bottom = np.hstack([np.eye(n * (p - 1)), np.zeros((n * (p - 1), n))])
    return np.vstack([top, bottom])


def ma_coefficients(As: Sequence[np.ndarray], horizon: int) -> np.ndarray:
    """``Psi_0 .. Psi_{horizon-1}`` of ``y_t = sum_j A_j y_{t-j} + u_t``."""
    n = As[0].shape[0]
    psi = np.zeros((horizon, n, n))
    psi[0] = np.eye(n)
    for h in range(1, horizon):
        for j, A in enumerate(As, start=1):
            if h - j < 0:
                break
            psi[h] += A @ psi[h - j]
    return psi


def _orth_irf(As, Sigma_i, horizon):
    P = mk.cholesky(Sigma_i, "Sigma block")
    return ma_coefficients(As, horizon) @ P


def _sigma_block(Sigma, spec, i):
    sl = slice(i * spec.n, (i + 1) * spec.n)
    return Sigma[sl, sl]


def irf(params: VecmParams, spec: PanelSpec, horizon: int) -> np.ndarray:
    """Orthogonalised impulse responses, shape ``(N, horizon + 1, n, n)``.

    ``out[i, h, j, s]`` is the response of variable ``j`` at step ``h`` to a
    one-standard-deviation shock ``s`` (lower Cholesky of the individual's
    ``Sigma`` block, variables in data column order).
    """
    out = np.zeros((spec.N, horizon + 1, spec.n, spec.n))
    for i in range(spec.N):
        out[i] = _orth_irf(vecm_to_var(params, spec, i), _sigma_block(params.Sigma, spec, i), horizon + 1)
    return out


@dataclass
class FevdResult:
    """``shares[i, h-1, j, s]``: share of variable ``j``'s ``h``-step forecast
    error variance due to shock ``s`` for individual ``i``."""

    horizon: int
    shares: np.ndarray
    variables: list = field(default_factory=list)

    def rows(self, individuals: Optional[Sequence[str]] = None):
        N, H, n, _ = self.shares.shape
        names = list(individuals) if individuals else [str(i + 1) for i in range(N)]
        variables = self.variables or [f"y{j + 1}" for j in range(n)]
        for i in range(N):
            for h in range(H):
                for j in range(n):
                    for s in range(n):
                        yield names[i], h + 1, variables[j], variables[s], float(self.shares[i, h, j, s])


def fevd_from_irf(theta: np.ndarray) -> np.ndarray:
    """FEVD shares from orthogonalised responses ``theta[h, j, s]``, h = 0..H-1."""
    num = np.cumsum(theta ** 2, axis=0)
    return num / num.sum(axis=2, keepdims=True)


def fevd(params: VecmParams, spec: PanelSpec, horizon: int, variables=None) -> FevdResult:
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    shares = np.zeros((spec.N, horizon, spec.n, spec.n))
    for i in range(spec.N):
        theta = _orth_irf(vecm_to_var(params, spec, i), _sigma_block(params.Sigma, spec, i), horizon)
        shares[i] = fevd_from_irf(theta)
    return FevdResult(horizon, shares, list(variables or []))


def posterior_fevd(chain, horizon: int, max_draws: int = 1000, variables=None):
    """Posterior mean FEVD plus 2.5%/97.5% bands over (a thinned subset of) draws."""
    idx = _subsample(len(chain), max_draws)
    per = np.stack([fevd(chain.params(d), chain.spec, horizon).shares for d in idx])
    mean = FevdResult(horizon, per.mean(axis=0), list(variables or []))
    return mean, np.quantile(per, 0.025, axis=0), np.quantile(per, 0.975, axis=0)


def _subsample(D, max_draws):
    if D == 0:
        raise EmptyChain("chain has no draws")
    if D <= max_draws:
        return np.arange(D)
    return np.unique(np.linspace(0, D - 1, max_draws).round().astype(int))


# -- information criteria ------------------------------------------------


def posterior_mean_state(chain):
    """Posterior means of ``Pi_i``, ``C_i``, ``Sigma`` and ``rho``."""
    if len(chain) == 0:
        raise EmptyChain("chain has no draws")
    Pis = list(chain.pis().mean(axis=0))
    Cs = list(chain.cs().mean(axis=0))
    return Pis, Cs, chain.Sigma.mean(axis=0), float(chain.rho.mean())


def pointwise_matrix(chain, data: PanelData, max_draws: int = 2000) -> np.ndarray:
    """``(draws, T)`` per-period log densities for WAIC."""
    spec = chain.spec
    D = design(data, spec)
    idx = _subsample(len(chain), max_draws)
    Pis_all = chain.pis()
    C_all = chain.cs()
    out = np.zeros((len(idx), spec.T))
    for row, d in enumerate(idx):
        eps = np.hstack([D.dy[i] - D.ylag[i] @ Pis_all[d, i].T - D.w[i] @ C_all[d, i]
                         for i in range(spec.N)])
        out[row] = pointwise_loglik(eps, chain.Sigma[d], float(chain.rho[d]))
    return out


def information_criteria(chain, data: PanelData, spec: Optional[PanelSpec] = None) -> dict:
    """DIC, WAIC, BIC and AIC.

    DIC uses ``p_D = 2 (ll(theta_bar) - mean ll)``; WAIC treats one period's
    ``Nn``-vector as the observation unit; BIC and AIC are evaluated at the
    posterior mean with ``Nn(k + 2 rbar + 1) + 2`` parameters and BIC sample size
    ``T N n``.
    """
    spec = spec or chain.spec
    if len(chain) == 0:
        raise EmptyChain("chain has no draws")
    Pis, Cs, Sigma, rho = posterior_mean_state(chain)
    ll_bar = loglik_residuals(residuals_from(data, spec, Pis, Cs), Sigma, rho)
    p_d = 2.0 * (ll_bar - float(np.mean(chain.loglik)))
    lp = pointwise_matrix(chain, data)
    lppd = float(np.sum(logsumexp(lp, axis=0) - np.log(lp.shape[0])))
    p_waic = float(np.sum(np.var(lp, axis=0, ddof=1))) if lp.shape[0] > 1 else 0.0
    k = spec.criteria_parameter_count()
    return {
        "dic": -2.0 * ll_bar + 2.0 * p_d,
        "p_d": p_d,
        "waic": -2.0 * (lppd - p_waic),
        "p_waic": p_waic,
        "lppd": lppd,
        "bic": -2.0 * ll_bar + k * np.log(spec.T * spec.N * spec.n),
        "aic": -2.0 * ll_bar + 2.0 * k,
        "loglik_at_mean": ll_bar,
        "n_params": k,
    }


def rank_profile(data: PanelData, L: int, prior, cc, ranks: Sequence[int]) -> list:
    """Posterior-mean log-likelihood for each common rank in ``ranks``.

    ``r = 0`` fits the pure difference VAR (``Pi = 0``). Each entry is a dict
    with ``rank``, ``mean_loglik`` and (on failure) ``error``.
    """
    from .gibbs import run_chain

    rows = []
    for r in sorted(ranks):
        spec = data.spec(L, [r] * data.N)
        try:
            chain = run_chain(data, spec, prior, cc)
            rows.append({"rank": r, "mean_loglik": float(np.mean(chain.loglik))})
        except Exception as exc:  # one failed cell must not sink the profile
            rows.append({"rank": r, "mean_loglik": float("nan"), "error": str(exc)})
    return rows


# -- convergence diagnostics ---------------------------------------------


def autocorrelation(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    x = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n] / n
    if acov[0] <= 0:
        return np.r_[1.0, np.zeros(n - 1)]
    return acov / acov[0]


def effective_sample_size(x: np.ndarray) -> float:
    """Geyer initial positive (monotone) sequence estimator, capped at the draw count."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    if np.ptp(x) == 0:
        return float(n)
    rho = autocorrelation(x)
    pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    total = 0.0
    prev = np.inf
    for g in pairs:
        if g <= 0:
            break
        g = min(g, prev)
        total += g
        prev = g
    tau = -1.0 + 2.0 * total
    tau = max(tau, 1.0 / np.log10(n)) if tau <= 0 else tau
    return float(min(n / tau, n))


def mcse(x: np.ndarray, ess: Optional[float] = None) -> float:
    x = np.asarray(x, dtype=float)
    ess = effective_sample_size(x) if ess is None else ess
    return float(np.std(x, ddof=1) / np.sqrt(ess))


def parameter_table(chain) -> dict:
    """Named scalar traces: ``Pi``, ``Gamma``, ``Phi``, ``Sigma`` (lower triangle), ``nu``, ``tau``, ``rho``."""
    spec = chain.spec
    out = {}
    P = chain.pis()
    C = chain.cs()
    for i in range(spec.N):
        u = i + 1
        for a in range(spec.n):
            for c in range(spec.n):
                out[f"Pi[{u}][{a + 1},{c + 1}]"] = P[:, i, a, c]
        for h in range(spec.L):
            for a in range(spec.n):
                for c in range(spec.n):
                    out[f"Gamma[{u},{h + 1}][{a + 1},{c + 1}]"] = C[:, i, h * spec.n + c, a]
        for a in range(spec.n):
            for q in range(spec.k_d):
                out[f"Phi[{u}][{a + 1},{q + 1}]"] = C[:, i, spec.n * spec.L + q, a]
    for a in range(spec.Nn):
        for c in range(a + 1):
            out[f"Sigma[{a + 1},{c + 1}]"] = chain.Sigma[:, a, c]
    out["nu"] = chain.nu
    out["tau"] = chain.tau
    out["rho"] = chain.rho
    return out


def summarize(chain) -> list:
    """Rows of ``parameter, mean, sd, q2.5, q97.5, ess, mcse``."""
    if len(chain) == 0:
        raise EmptyChain("chain has no draws")
    rows = []
    for name, x in parameter_table(chain).items():
        ess = effective_sample_size(x)
        sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
        rows.append({
            "parameter": name, "mean": float(np.mean(x)), "sd": sd,
            "q2.5": float(np.quantile(x, 0.025)), "q97.5": float(np.quantile(x, 0.975)),
            "ess": ess, "mcse": float(sd / np.sqrt(ess)),
        })
    return rows


@dataclass
class DiagnosticsReport:
    ess: dict
    mcse: dict
    r2_draws: np.ndarray
    loglik_draws: np.ndarray
    ppp: float

    def to_dict(self) -> dict:
        return {
            "ess": self.ess, "mcse": self.mcse,
            "r2": _describe(self.r2_draws), "loglik": _describe(self.loglik_draws),
            "ppp": self.ppp,
        }


def _describe(x):
    x = np.asarray(x, dtype=float)
    return {"mean": float(x.mean()), "sd": float(x.std(ddof=1)) if x.size > 1 else 0.0,
            "q2.5": float(np.quantile(x, 0.025)), "q50": float(np.quantile(x, 0.5)),
            "q97.5": float(np.quantile(x, 0.975))}


def chi2_discrepancy(eps: np.ndarray, Sigma: np.ndarray, rho: float = 0.0) -> float:
    """``vec(eps)' (Sigma kron F_rho)^{-1} vec(eps)``."""
    T = eps.shape[0]
    Lc = mk.cholesky(Sigma, "Sigma")
    E = eps if rho == 0 else mk.ar1_precision(rho, T) @ eps
    Z = linalg.cho_solve((Lc, True), E.T)
    return float(np.sum(eps.T * Z))


def diagnostics(chain, data: PanelData, spec: Optional[PanelSpec] = None,
                rng: Optional[np.random.Generator] = None, ppp_draws: int = 1000) -> DiagnosticsReport:
    """ESS and Monte-Carlo error per parameter, posterior R^2, PPP.

    For PPP each selected draw simulates a replicated error matrix from
    ``N(0, Sigma kron F_rho)`` with the regressors held at their observed
    values, and compares chi-square discrepancies.
    """
    spec = spec or chain.spec
    if len(chain) < 2:
        raise EmptyChain("diagnostics need at least two draws")
    rng = rng if rng is not None else np.random.default_rng(0)
    ess, err = {}, {}
    for name, x in parameter_table(chain).items():
        e = effective_sample_size(x)
        ess[name] = e
        err[name] = float(np.std(x, ddof=1) / np.sqrt(e))
    D = design(data, spec)
    dy = np.hstack(D.dy)
    sst = float(np.sum((dy - dy.mean(axis=0)) ** 2))
    P = chain.pis()
    C = chain.cs()
    r2 = np.zeros(len(chain))
    exceed, used = 0, 0
    ppp_idx = set(_subsample(len(chain), ppp_draws).tolist())
    for d in range(len(chain)):
        eps = np.hstack([D.dy[i] - D.ylag[i] @ P[d, i].T - D.w[i] @ C[d, i] for i in range(spec.N)])
        r2[d] = 1.0 - float(np.sum(eps ** 2)) / sst
        if d in ppp_idx:
            Sigma, rho = chain.Sigma[d], float(chain.rho[d])
            Lc = mk.cholesky(Sigma, "Sigma")
            Z = rng.standard_normal((spec.T, spec.Nn))
            if rho != 0:
                Z = mk.cholesky(mk.ar1_correlation(rho, spec.T), "F_rho") @ Z
            rep = Z @ Lc.T
            exceed += chi2_discrepancy(rep, Sigma, rho) >= chi2_discrepancy(eps, Sigma, rho)
            used += 1
    return DiagnosticsReport(ess, err, r2, np.asarray(chain.loglik, dtype=float), exceed / used)
