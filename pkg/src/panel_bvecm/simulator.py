"""Synthetic cointegrated panels and the accuracy-evaluation protocol.

The study fits the model to data simulated from a known truth and scores the
posterior for the short-run ``Gamma`` and long-run ``Pi`` matrices with five
metrics (interval coverage, RMSE, MAE, interval length, bias), pooling the
entries of all individuals. The 300-observation scenario is called ``large``
(``extreme`` is accepted as a synonym).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from . import matrix_kit as mk
from .analytics import companion, var_from_pi
from .errors import DimensionMismatch, EmptyChain, Unstable
from .model import (
    PanelData,
    PanelSpec,
    VecmParams,
    deterministic_terms,
    pack_b,
    pack_beta_star,
    pis_and_cs,
    split_C,
)

logger = logging.getLogger(__name__)

SCENARIO_LENGTHS = {"short": 30, "moderate": 100, "large": 300}
SCENARIO_SYNONYMS = {"extreme": "large"}
BURN_IN = 200
UNIT_ROOT_TOL = 1e-6
METRICS = ("coverage", "rmse", "mae", "avg_ci_length", "bias")


@dataclass
class Scenario:
    """One simulation setting: a truth, a sample length and a seed."""

    name: str
    T: int
    N: int
    n: int
    L: int
    truth: VecmParams
    ranks: tuple
    seed: int = 0
    deterministic: str = "constant"

    @property
    def k_d(self) -> int:
        return deterministic_terms(1, self.deterministic).shape[1]

    @property
    def spec(self) -> PanelSpec:
        return PanelSpec(self.N, self.n, self.T, self.L, self.k_d, tuple(self.ranks))

    @classmethod
    def named(cls, name: str, truth_fixture: "TruthFixture", seed: int = 0) -> "Scenario":
        key = SCENARIO_SYNONYMS.get(name, name)
        if key not in SCENARIO_LENGTHS:
            raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIO_LENGTHS)}")
        f = truth_fixture
        return cls(key, SCENARIO_LENGTHS[key], f.N, f.n, f.L, f.params, tuple(f.ranks), seed,
                   f.deterministic)


# -- truth construction --------------------------------------------------


@dataclass
class TruthFixture:
    """A stored truth with the metadata needed to rebuild its ``PanelSpec``."""

    N: int
    n: int
    L: int
    ranks: list
    deterministic: str
    params: VecmParams
    Hg: Optional[np.ndarray] = None
    version: int = 1
    note: str = ""
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    gammas: list = field(default_factory=list)
    phis: list = field(default_factory=list)

    def spec(self, T: int) -> PanelSpec:
        k_d = deterministic_terms(1, self.deterministic).shape[1]
        return PanelSpec(self.N, self.n, T, self.L, k_d, tuple(self.ranks))

    def to_json(self) -> dict:
        return {
            "version": self.version, "note": self.note, "N": self.N, "n": self.n, "L": self.L,
            "ranks": list(self.ranks), "deterministic": self.deterministic,
            "Hg": None if self.Hg is None else np.asarray(self.Hg).tolist(),
            "Sigma": self.params.Sigma.tolist(), "nu": self.params.nu, "tau": self.params.tau,
            "rho": self.params.rho,
            "individuals": [
                {"alpha": a.tolist(), "beta": b.tolist(), "Gamma": [g.tolist() for g in gs],
                 "Phi": p.tolist()}
                for a, b, gs, p in zip(self.alphas, self.betas, self.gammas, self.phis)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TruthFixture":
        n, L = int(obj["n"]), int(obj["L"])
        alphas, betas, gammas, phis = [], [], [], []
        for ind in obj["individuals"]:
            alphas.append(np.asarray(ind["alpha"], dtype=float).reshape(n, -1))
            betas.append(np.asarray(ind["beta"], dtype=float).reshape(n, -1))
            gammas.append([np.asarray(g, dtype=float).reshape(n, n) for g in ind["Gamma"]])
            phis.append(np.asarray(ind["Phi"], dtype=float).reshape(n, -1))
        if any(len(g) != L for g in gammas):
            raise DimensionMismatch("fixture Gamma count does not match L")
        params = truth_params(alphas, betas, gammas, phis, np.asarray(obj["Sigma"], dtype=float),
                              nu=float(obj.get("nu", 1.0)), tau=float(obj.get("tau", 1.0)),
                              rho=float(obj.get("rho", 0.0)))
        Hg = obj.get("Hg")
        return cls(int(obj["N"]), n, L, list(obj["ranks"]), obj.get("deterministic", "constant"),
                   params, None if Hg is None else np.asarray(Hg, dtype=float),
                   int(obj.get("version", 1)), obj.get("note", ""), alphas, betas, gammas, phis)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "TruthFixture":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def load_default_truth() -> TruthFixture:
    """The shipped ``n=4, N=3, L=1`` study truth."""
    text = resources.files("panel_bvecm.fixtures").joinpath("study_truth_v1.json").read_text()
    return TruthFixture.from_json(json.loads(text))


def truth_params(alphas, betas, gammas, phis, Sigma, nu=1.0, tau=1.0, rho=0.0) -> VecmParams:
    """Pack per-individual ``alpha, beta, Gamma, Phi`` into a :class:`VecmParams`.

    ``beta`` is orthonormalised first (``alpha`` is rotated to keep ``Pi``), and
    ``beta* = beta kappa`` with ``kappa = (alpha' alpha)^{1/2}`` as the sampler
    stores it.
    """
    al, Cs, bstars = [], [], []
    for a, b, gs, p in zip(alphas, betas, gammas, phis):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        if b.shape[1]:
            R = mk.sym_sqrt(b.T @ b)
            b = b @ mk.inv_sym_sqrt(b.T @ b)
            a = a @ R
            kappa = mk.sym_sqrt(a.T @ a)
            bstars.append(b @ kappa)
        else:
            bstars.append(np.zeros((b.shape[0], 0)))
        al.append(a)
        Cs.append(np.vstack([g.T for g in gs] + [np.atleast_2d(p).T]))
    return VecmParams(np.asarray(Sigma, dtype=float), pack_b(al, Cs), pack_beta_star(bstars),
                      float(nu), float(tau), float(rho))


def companion_eigenvalues(Pi: np.ndarray, gammas: Sequence[np.ndarray]) -> np.ndarray:
    return np.linalg.eigvals(companion(var_from_pi(Pi, gammas)))


def check_stable(params: VecmParams, spec: PanelSpec, exact_roots: bool = False) -> None:
    """Raise :class:`Unstable` if any companion eigenvalue exceeds one in modulus.

    With ``exact_roots`` also require exactly ``n - r_i`` unit roots per individual.
    """
    Pis, Cs = pis_and_cs(params, spec)
    for i in range(spec.N):
        gammas, _ = split_C(Cs[i], spec)
        mod = np.abs(companion_eigenvalues(Pis[i], gammas))
        if mod.max() > 1 + 1e-8:
            raise Unstable(f"individual {i + 1}: companion eigenvalue modulus {mod.max():.6g} > 1")
        if exact_roots:
            units = int(np.sum(np.abs(mod - 1) < UNIT_ROOT_TOL))
            if units != spec.n - spec.ranks[i]:
                raise Unstable(
                    f"individual {i + 1}: {units} unit roots, expected {spec.n - spec.ranks[i]}"
                )


def equicorrelated_sigma(N: int, n: int, within: float = 0.3, across: float = 0.15,
                         scale: float = 1.0) -> np.ndarray:
    """Unit-diagonal covariance with one correlation inside and one across individuals."""
    Nn = N * n
    S = np.full((Nn, Nn), across)
    for i in range(N):
        S[i * n:(i + 1) * n, i * n:(i + 1) * n] = within
    np.fill_diagonal(S, 1.0)
    mk.cholesky(S, "Sigma")
    return scale * S


def construct_truth(N: int, n: int, L: int, ranks: Sequence[int], Hg: Optional[np.ndarray],
                    seed: int, sigma: Optional[np.ndarray] = None, max_modulus: float = 0.9,
                    phi_scale: float = 0.05, gamma_radius: float = 0.35,
                    deterministic: str = "constant", max_tries: int = 1000) -> TruthFixture:
    """Draw a stable cointegrated truth by rejection.

    ``beta_i`` lies in ``sp(Hg)`` when ``Hg`` has at least ``r_i`` columns;
    ``alpha_i`` is drawn so that ``I + beta' alpha`` is contractive, and the
    ``Gamma`` draws are rescaled to spectral radius ``gamma_radius``. A draw is
    kept when all non-unit companion roots are below ``max_modulus`` and the
    unit-root count is exactly ``n - r_i``.
    """
    rng = np.random.default_rng(seed)
    k_d = deterministic_terms(1, deterministic).shape[1]
    H = None if Hg is None else mk.normalize_semiorthogonal(Hg)
    alphas, betas, gammas, phis = [], [], [], []
    for i, r in enumerate(ranks):
        for _ in range(max_tries):
            if r == 0:
                beta = np.zeros((n, 0))
                alpha = np.zeros((n, 0))
            else:
                if H is not None and H.shape[1] >= r:
                    beta = H @ np.linalg.qr(rng.standard_normal((H.shape[1], r)))[0]
                else:
                    beta = np.linalg.qr(rng.standard_normal((n, r)))[0]
                speed = rng.uniform(0.15, 0.45, r)
                alpha = -beta * speed + 0.1 * (np.eye(n) - beta @ beta.T) @ rng.standard_normal((n, r))
            gs = []
            for _h in range(L):
                G = rng.standard_normal((n, n))
                G *= gamma_radius / max(np.abs(np.linalg.eigvals(G)).max(), 1e-12)
                gs.append(G / (_h + 1))
            Pi = alpha @ beta.T if r else np.zeros((n, n))
            mod = np.sort(np.abs(companion_eigenvalues(Pi, gs)))[::-1]
            units = int(np.sum(np.abs(mod - 1) < UNIT_ROOT_TOL))
            rest = mod[units:]
            if units == n - r and (rest.size == 0 or rest.max() < max_modulus) and mod.max() <= 1 + 1e-8:
                break
        else:
            raise Unstable(f"no stable truth found for individual {i + 1} after {max_tries} draws")
        alphas.append(alpha)
        betas.append(beta)
        gammas.append(gs)
        phis.append(phi_scale * rng.standard_normal((n, k_d)))
    Sigma = equicorrelated_sigma(N, n) if sigma is None else np.asarray(sigma, dtype=float)
    params = truth_params(alphas, betas, gammas, phis, Sigma)
    return TruthFixture(N, n, L, list(ranks), deterministic, params, Hg, 1,
                        f"construct_truth(seed={seed})", alphas, betas, gammas, phis)


# -- simulation ----------------------------------------------------------


def simulate_errors(Sigma: np.ndarray, T: int, rng: np.random.Generator, rho: float = 0.0) -> np.ndarray:
    """``T x Nn`` errors with rows ``N(0, Sigma)`` and AR(1) time correlation ``rho``."""
    Lc = mk.cholesky(Sigma, "Sigma")
    u = rng.standard_normal((T, Sigma.shape[0])) @ Lc.T
    if rho == 0:
        return u
    e = np.empty_like(u)
    e[0] = u[0]
    s = np.sqrt(1.0 - rho * rho)
    for t in range(1, T):
        e[t] = rho * e[t - 1] + s * u[t]
    return e


def simulate_levels(Pis, Cs, L: int, det: np.ndarray, eps: np.ndarray,
                    init: Optional[np.ndarray] = None) -> np.ndarray:
    """Iterate the VECM forward.

    ``eps`` is ``T0 x Nn``; row ``t`` drives ``dy_t`` for ``t >= L + 1``. The
    first ``L + 1`` level rows are ``init`` (``(N, L + 1, n)``, zeros by default).
    Returns levels of shape ``(N, T0, n)``.
    """
    T0, Nn = eps.shape
    N = len(Pis)
    n = Nn // N
    y = np.zeros((N, T0, n))
    if init is not None:
        y[:, :L + 1] = init
    dy = np.zeros((N, T0, n))
    dy[:, 1:L + 1] = np.diff(y[:, :L + 1], axis=1)
    for t in range(L + 1, T0):
        for i in range(N):
            C = Cs[i]
            x = Pis[i] @ y[i, t - 1] + eps[t, i * n:(i + 1) * n]
            for h in range(L):
                x += C[h * n:(h + 1) * n].T @ dy[i, t - 1 - h]
            x += C[n * L:].T @ det[t]
            dy[i, t] = x
            y[i, t] = y[i, t - 1] + x
    return y


def simulate_panel(scenario: Scenario, rng: np.random.Generator, burn_in: int = BURN_IN,
                   rho: Optional[float] = None) -> PanelData:
    """Simulate ``T + L + 1`` level observations per individual after a burn-in.

    The recursion starts from zero levels, discards ``burn_in`` steps, and
    errors are ``N(0, Sigma)`` across individuals, AR(1) in time when ``rho``
    (default: the truth's ``rho``) is nonzero.
    """
    spec = scenario.spec
    truth = scenario.truth
    truth.check(spec)
    check_stable(truth, spec)
    rho = truth.rho if rho is None else rho
    T0 = spec.T + spec.L + 1
    total = T0 + burn_in
    det = deterministic_terms(total, scenario.deterministic)
    Pis, Cs = pis_and_cs(truth, spec)
    eps = simulate_errors(truth.Sigma, total, rng, rho)
    y = simulate_levels(Pis, Cs, spec.L, det, eps)[:, burn_in:]
    return PanelData(y, deterministic_terms(T0, scenario.deterministic))


def simulate_from_params(params: VecmParams, spec: PanelSpec, deterministic: np.ndarray,
                         init: np.ndarray, rng: np.random.Generator) -> PanelData:
    """Data of length ``T + L + 1`` from ``params`` given the first ``L + 1`` level rows."""
    T0 = spec.T + spec.L + 1
    Pis, Cs = pis_and_cs(params, spec)
    eps = simulate_errors(params.Sigma, T0, rng, params.rho)
    return PanelData(simulate_levels(Pis, Cs, spec.L, deterministic, eps, init), deterministic)


# -- accuracy metrics ----------------------------------------------------


@dataclass
class GroupAccuracy:
    coverage: float
    rmse: float
    mae: float
    avg_ci_length: float
    bias: float
    count: int

    def as_dict(self) -> dict:
        return {m: getattr(self, m) for m in METRICS}


@dataclass
class AccuracyReport:
    groups: dict

    def rows(self, scenario: str = ""):
        for g, acc in self.groups.items():
            for m in METRICS:
                yield {"scenario": scenario, "group": g, "metric": m, "value": getattr(acc, m)}


def group_accuracy(truth: np.ndarray, draws: np.ndarray) -> GroupAccuracy:
    """Metrics for entries ``truth`` (any shape) against ``draws`` (``(D,) + shape``).

    Errors are ``truth - posterior mean``; intervals are equal-tailed 95%.
    """
    truth = np.asarray(truth, dtype=float).ravel()
    draws = np.asarray(draws, dtype=float).reshape(draws.shape[0], -1)
    if truth.size == 0:
        nan = float("nan")
        return GroupAccuracy(nan, nan, nan, nan, nan, 0)
    mean = draws.mean(axis=0)
    lo = np.quantile(draws, 0.025, axis=0)
    hi = np.quantile(draws, 0.975, axis=0)
    err = truth - mean
    covered = (lo <= truth) & (truth <= hi)
    return GroupAccuracy(
        float(covered.mean()), float(np.sqrt(np.mean(err ** 2))), float(np.mean(np.abs(err))),
        float(np.mean(hi - lo)), float(np.mean(err)), int(truth.size),
    )


def accuracy_report(truth: VecmParams, chain) -> AccuracyReport:
    """Pooled ``Gamma`` and ``Pi`` accuracy of a chain against the truth."""
    if len(chain) == 0:
        raise EmptyChain("chain has no draws")
    spec = chain.spec
    truth.check(spec)
    Pis_true, Cs_true = pis_and_cs(truth, spec)
    gam_true = np.stack([np.stack(split_C(C, spec)[0]) if spec.L else np.zeros((0, spec.n, spec.n))
                         for C in Cs_true])
    return AccuracyReport({
        "Gamma": group_accuracy(gam_true, chain.gammas()),
        "Pi": group_accuracy(np.stack(Pis_true), chain.pis()),
    })


# -- study ---------------------------------------------------------------


@dataclass
class StudyResult:
    reports: dict
    errors: dict

    def rows(self):
        for name, rep in self.reports.items():
            yield from rep.rows(name)

    def to_json(self) -> dict:
        return {
            "rows": list(self.rows()),
            "errors": self.errors,
        }


def _fit_scenario(scenario: Scenario, prior, cc):
    from .gibbs import run_chain

    data = simulate_panel(scenario, np.random.default_rng(scenario.seed))
    chain = run_chain(data, scenario.spec, prior, cc)
    return accuracy_report(scenario.truth, chain)


def run_study(scenarios: Sequence[Scenario], prior, cc, workers: int = 1) -> StudyResult:
    """One fit per scenario; a failing scenario is recorded, not raised."""
    reports, errors = {}, {}
    if workers > 1 and len(scenarios) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {s.name: pool.submit(_fit_scenario, s, prior, cc) for s in scenarios}
            for name, fut in futures.items():
                try:
                    reports[name] = fut.result()
                except Exception as exc:
                    errors[name] = f"{type(exc).__name__}: {exc}"
        return StudyResult(reports, errors)
    for s in scenarios:
        try:
            reports[s.name] = _fit_scenario(s, prior, cc)
        except Exception as exc:
            logger.error("scenario %s failed: %s", s.name, exc)
            errors[s.name] = f"{type(exc).__name__}: {exc}"
    return StudyResult(reports, errors)
