"""Prior configuration, prior covariance construction and prior sampling.

Gamma conventions
-----------------
``G(mu, dof)`` is parameterised by its mean and degrees of freedom, i.e. the
density is proportional to ``x**(dof/2 - 1) * exp(-dof * x / (2 * mu))``
(shape ``dof/2``, rate ``dof/(2 mu)``). The tau prior ``IG(mu, dof)`` means
``1/tau ~ G(mu, dof)``. Setting ``gamma_convention="shape_rate"`` reads the
same two numbers as (shape, rate) instead.

Coefficient priors
------------------
``b | nu ~ N(0, Vtilde / nu)``. Entries belonging to ``Gamma`` and ``Phi``
get variance ``v_diffuse``. For the loadings, ``vec(alpha_i') ~
N(0, I_n kron M_i / nu)`` with ``M_i = (beta_i' P_{1/tau} beta_i)^{-1}``; this
is the loading prior that, combined with ``beta*_i = P_eta Z_i``, makes
``vec(beta*_i) | A_i ~ N(0, (I_r kron P_tau) / nu)`` for semi-orthogonal
``A_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import linalg, stats
from scipy.special import gammaln

from . import matrix_kit as mk
from .errors import ConfigError, ImproperPrior, NoRestriction, OutOfRange
from .model import (
    LOG_2PI,
    PanelSpec,
    VecmParams,
    decompose_beta_star,
    pack_beta_star,
    unpack_b,
    unpack_beta_star,
)

GAMMA_CONVENTIONS = ("mean_dof", "shape_rate")


@dataclass
class PriorConfig:
    mu_nu: float = 21.0
    nu_nu: float = 42.0
    mu_tau: float = 5.0
    nu_tau: float = 15.0
    Hg: Optional[np.ndarray] = None
    v_diffuse: float = 1000.0
    # "improper" or (scale matrix, dof) for an inverse-Wishart prior
    sigma_prior: Union[str, tuple] = "improper"
    gamma_convention: str = "mean_dof"
    # "projection" (default) or "diffuse": alpha entries get v_diffuse as well
    alpha_prior: str = "projection"
    _H: Optional[np.ndarray] = field(default=None, init=False, repr=False)
    _Hp: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        for key in ("mu_nu", "nu_nu", "mu_tau", "nu_tau", "v_diffuse"):
            if not float(getattr(self, key)) > 0:
                raise ConfigError(key, "must be positive")
        if self.gamma_convention not in GAMMA_CONVENTIONS:
            raise ConfigError("gamma_convention", f"must be one of {GAMMA_CONVENTIONS}")
        if self.alpha_prior not in ("projection", "diffuse"):
            raise ConfigError("alpha_prior", "must be 'projection' or 'diffuse'")
        if self.Hg is not None:
            self.Hg = np.atleast_2d(np.asarray(self.Hg, dtype=float))
            self._H = mk.normalize_semiorthogonal(self.Hg)
            self._Hp = mk.orth_complement(self._H)
        if not isinstance(self.sigma_prior, str):
            scale, dof = self.sigma_prior
            self.sigma_prior = (np.atleast_2d(np.asarray(scale, dtype=float)), float(dof))
        elif self.sigma_prior != "improper":
            raise ConfigError("sigma_prior", "must be 'improper' or (scale, dof)")

    @property
    def H(self) -> Optional[np.ndarray]:
        """Semi-orthogonal version of ``Hg`` (None when unrestricted)."""
        return self._H

    @property
    def restricted(self) -> bool:
        return self._H is not None

    def validate(self, spec: PanelSpec) -> None:
        if self.gamma_convention == "mean_dof" and self.nu_nu - spec.n * spec.N * spec.rbar <= 0:
            raise ConfigError(
                "nu_nu",
                f"nu_nu - n N rbar = {self.nu_nu - spec.n * spec.N * spec.rbar:g} must be positive",
            )
        if self.restricted:
            if self.H.shape[0] != spec.n:
                raise ConfigError("Hg", f"must have {spec.n} rows, has {self.H.shape[0]}")
        if not isinstance(self.sigma_prior, str):
            scale, dof = self.sigma_prior
            if scale.shape != (spec.Nn, spec.Nn):
                raise ConfigError("sigma_prior", f"scale must be {spec.Nn} x {spec.Nn}")
            if dof <= spec.Nn - 1:
                raise ConfigError("sigma_prior", "dof must exceed Nn - 1")

    def _gamma(self, a: float, b: float):
        if self.gamma_convention == "mean_dof":
            return b / 2.0, b / (2.0 * a)
        return a, b

    def nu_prior(self, spec: PanelSpec):
        """(shape, rate) of the gamma prior on ``nu``."""
        if self.gamma_convention == "mean_dof":
            return self._gamma(self.mu_nu, self.nu_nu - spec.n * spec.N * spec.rbar)
        return self._gamma(self.mu_nu, self.nu_nu)

    def tau_inv_prior(self):
        """(shape, rate) of the gamma prior on ``1/tau``."""
        return self._gamma(self.mu_tau, self.nu_tau)

    def H_perp(self) -> np.ndarray:
        if self._Hp is None:
            raise NoRestriction("no Hg configured")
        return self._Hp

    def P(self, t: float, n: int) -> np.ndarray:
        """``P_t``; identity when no restriction is configured."""
        if not self.restricted:
            return np.eye(n)
        if t < 0:
            raise OutOfRange(f"t must be non-negative, got {t}")
        P = self.H @ self.H.T + t * (self._Hp @ self._Hp.T)
        return 0.5 * (P + P.T)


def _alpha_block(cfg: PriorConfig, beta: np.ndarray, tau: float, inverse: bool) -> np.ndarray:
    r = beta.shape[1]
    if cfg.alpha_prior == "diffuse":
        return np.eye(r) * (1.0 / cfg.v_diffuse if inverse else cfg.v_diffuse)
    if not cfg.restricted:
        G = beta.T @ beta
    else:
        Hp = cfg.H_perp()
        proj = beta.T @ Hp
        G = beta.T @ beta + (1.0 / tau - 1.0) * (proj @ proj.T)
    G = 0.5 * (G + G.T)
    return G if inverse else mk.spd_inverse(G, "alpha prior block")


def _vtilde(spec, cfg, betas, tau, inverse):
    blocks = []
    for i, r in enumerate(spec.ranks):
        beta = np.asarray(betas[i], dtype=float).reshape(spec.n, r)
        a = _alpha_block(cfg, beta, tau, inverse) if r else np.zeros((0, 0))
        diff = np.eye(spec.k) * (1.0 / cfg.v_diffuse if inverse else cfg.v_diffuse)
        blocks.append(np.kron(np.eye(spec.n), linalg.block_diag(a, diff)))
    return linalg.block_diag(*blocks)


def build_vtilde(spec: PanelSpec, cfg: PriorConfig, betas, tau: float) -> np.ndarray:
    """Prior covariance (up to ``1/nu``) of the short-run vector ``b``."""
    V = _vtilde(spec, cfg, betas, tau, inverse=False)
    mk.cholesky(V, "Vtilde")
    return V


def build_vtilde_inv(spec: PanelSpec, cfg: PriorConfig, betas, tau: float) -> np.ndarray:
    """Inverse of :func:`build_vtilde`, assembled blockwise without inversion."""
    return _vtilde(spec, cfg, betas, tau, inverse=True)


def build_vtilde_beta(spec: PanelSpec, cfg: PriorConfig, tau: float) -> np.ndarray:
    """``diag_i(I_{r_i} kron P_tau)``."""
    P = cfg.P(tau, spec.n)
    blocks = [np.kron(np.eye(r), P) for r in spec.ranks]
    return linalg.block_diag(*blocks) if blocks else np.zeros((0, 0))


def build_vtilde_beta_inv(spec: PanelSpec, cfg: PriorConfig, tau: float) -> np.ndarray:
    """``diag_i(I_{r_i} kron P_{1/tau})``; requires ``tau > 0``."""
    Pinv = cfg.P(1.0 / tau, spec.n) if cfg.restricted else np.eye(spec.n)
    blocks = [np.kron(np.eye(r), Pinv) for r in spec.ranks]
    return linalg.block_diag(*blocks) if blocks else np.zeros((0, 0))


def tau_dof_increment(spec: PanelSpec, cfg: PriorConfig) -> float:
    """Degrees of freedom ``beta*`` adds to the ``1/tau`` conditional.

    Equals ``N (n rbar - sum r_i^2 / N)`` when ``H`` has ``r_i`` columns.
    """
    m = cfg.H.shape[1]
    return float(sum(r * (spec.n - m) for r in spec.ranks))


def sample_inverse_wishart(scale: np.ndarray, dof: float, rng: np.random.Generator) -> np.ndarray:
    """Bartlett draw from ``IW(scale, dof)`` (mean ``scale / (dof - p - 1)``)."""
    p = scale.shape[0]
    Ls = mk.cholesky(scale, "inverse-Wishart scale")
    A = np.zeros((p, p))
    A[np.diag_indices(p)] = np.sqrt(rng.chisquare(dof - np.arange(p)))
    il = np.tril_indices(p, -1)
    A[il] = rng.standard_normal(len(il[0]))
    B = linalg.solve_triangular(A, Ls.T, lower=True)
    S = B.T @ B
    return 0.5 * (S + S.T)


def sample_nu_prior(spec: PanelSpec, cfg: PriorConfig, rng: np.random.Generator, size=None):
    shape, rate = cfg.nu_prior(spec)
    return rng.gamma(shape, 1.0 / rate, size)


def sample_tau_prior(cfg: PriorConfig, rng: np.random.Generator, size=None):
    """Draws of ``tau`` with ``1/tau`` from its gamma prior."""
    shape, rate = cfg.tau_inv_prior()
    return 1.0 / rng.gamma(shape, 1.0 / rate, size)


def sample_beta_star_prior(spec: PanelSpec, cfg: PriorConfig, nu: float, tau: float,
                           rng: np.random.Generator) -> list:
    """``beta*_i = P_eta Z_i`` with ``eta = sqrt(tau)`` and ``Z_i`` entries ``N(0, 1/nu)``."""
    P_eta = cfg.P(np.sqrt(tau), spec.n)
    return [P_eta @ (rng.standard_normal((spec.n, r)) / np.sqrt(nu)) for r in spec.ranks]


def sample_prior(spec: PanelSpec, cfg: PriorConfig, rng: np.random.Generator) -> VecmParams:
    """One joint draw from the (proper) prior.

    ``beta*_i = P_eta Z_i`` gives the cointegrating directions; loadings are then
    drawn from their conditional prior and ``beta*_i`` is re-expressed as
    ``beta_i (alpha_i' alpha_i)^{1/2}`` so the returned state satisfies
    ``alpha_i beta_i' = A_i beta*_i'``. That re-expression leaves the marginal of
    ``beta*_i`` unchanged.
    """
    if isinstance(cfg.sigma_prior, str):
        raise ImproperPrior("sample_prior needs a proper inverse-Wishart prior on Sigma")
    cfg.validate(spec)
    nu = float(sample_nu_prior(spec, cfg, rng))
    tau = float(sample_tau_prior(cfg, rng)) if cfg.restricted else 1.0
    betas = [decompose_beta_star(bs)[0] for bs in sample_beta_star_prior(spec, cfg, nu, tau, rng)]
    V = build_vtilde(spec, cfg, betas, tau)
    b = mk.cholesky(V / nu, "prior covariance") @ rng.standard_normal(spec.b_len)
    alphas, _ = unpack_b(b, spec)
    beta_stars = [beta @ mk.sym_sqrt(a.T @ a) for beta, a in zip(betas, alphas)]
    scale, dof = cfg.sigma_prior
    Sigma = sample_inverse_wishart(scale, dof, rng)
    return VecmParams(Sigma, b, pack_beta_star(beta_stars), nu, tau, 0.0)


def _mvn_logpdf(x: np.ndarray, cov: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    L = mk.cholesky(cov, "prior covariance")
    z = linalg.solve_triangular(L, x, lower=True)
    return -0.5 * (x.size * LOG_2PI + mk.logdet_from_chol(L) + float(z @ z))


def _gamma_logpdf(x: float, shape: float, rate: float) -> float:
    return float(shape * np.log(rate) - gammaln(shape) + (shape - 1) * np.log(x) - rate * x)


def log_prior_b(params: VecmParams, spec: PanelSpec, cfg: PriorConfig) -> float:
    betas = [decompose_beta_star(bs)[0] for bs in unpack_beta_star(params.b_beta_star, spec)]
    return _mvn_logpdf(params.b, build_vtilde(spec, cfg, betas, params.tau) / params.nu)


def log_prior_beta_star(params: VecmParams, spec: PanelSpec, cfg: PriorConfig) -> float:
    return _mvn_logpdf(params.b_beta_star, build_vtilde_beta(spec, cfg, params.tau) / params.nu)


def log_prior_sigma(Sigma: np.ndarray, cfg: PriorConfig) -> float:
    if isinstance(cfg.sigma_prior, str):
        L = mk.cholesky(Sigma, "Sigma")
        return -0.5 * (Sigma.shape[0] + 1) * mk.logdet_from_chol(L)
    scale, dof = cfg.sigma_prior
    return float(stats.invwishart.logpdf(Sigma, df=dof, scale=scale))


def log_prior(params: VecmParams, spec: PanelSpec, cfg: PriorConfig) -> float:
    """Sum of the prior log densities of every block of a parameter state.

    The ``Sigma`` term is ``-(Nn+1)/2 log|Sigma|`` under the improper prior.
    """
    params.check(spec)
    total = log_prior_sigma(params.Sigma, cfg)
    total += log_prior_b(params, spec, cfg)
    total += log_prior_beta_star(params, spec, cfg)
    total += _gamma_logpdf(params.nu, *cfg.nu_prior(spec))
    if cfg.restricted:
        # density of tau when 1/tau is gamma: p(1/tau) / tau^2
        total += _gamma_logpdf(1.0 / params.tau, *cfg.tau_inv_prior()) - 2.0 * np.log(params.tau)
    return float(total)
