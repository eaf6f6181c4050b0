"""Gibbs sampler for the Bayesian cointegrated panel VECM.

One cycle, given data and the current state:

1. ``Sigma``  ~ inverse-Wishart from the current residual cross products.
2. ``b``      ~ Gaussian, short-run regression with ``beta`` held fixed.
3. ``A_i = alpha_i (alpha_i' alpha_i)^{-1/2}`` and ``C_i`` are read off ``b``.
4. ``b_beta_star`` ~ Gaussian, long-run regression with ``A`` and ``C`` fixed.
5. ``beta*_i = beta_i kappa_i`` is split and ``alpha_i = A_i kappa_i``.
6. ``nu``     ~ gamma, ``1/tau`` ~ gamma.
7. optionally ``rho`` by random-walk Metropolis.

GLS moments use ``(Sigma kron F)^{-1} = Sigma^{-1} kron F^{-1}``; nothing of
size ``T N n`` squared is ever built.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from . import matrix_kit as mk
from .errors import BvecmError, ChainAbort, ConfigError, DofTooSmall, NoRestriction, NonFinite
from .model import (
    GramCache,
    PanelData,
    PanelSpec,
    VecmParams,
    canonical_signs,
    compose_pi,
    decompose_beta_star,
    design,
    normalize_alpha,
    pack_b,
    pack_beta_star,
    residual_dof,
    unpack_b,
    unpack_beta_star,
)
from .priors import (
    PriorConfig,
    build_vtilde_beta_inv,
    build_vtilde_inv,
    sample_inverse_wishart,
    tau_dof_increment,
)

logger = logging.getLogger(__name__)


@dataclass
class ChainConfig:
    warmup: int = 1000
    iterations: int = 10000
    seed: int = 0
    thin: int = 1
    rho_sampling: bool = False
    rho_proposal_sd: float = 0.05
    rho_init: float = 0.0

    def __post_init__(self):
        if self.warmup < 0:
            raise ConfigError("warmup", "must be >= 0")
        if self.iterations < 1:
            raise ConfigError("iterations", "must be >= 1")
        if self.thin < 1:
            raise ConfigError("thin", "must be >= 1")
        if self.rho_proposal_sd < 0:
            raise ConfigError("rho_proposal_sd", "must be >= 0")
        if abs(self.rho_init) >= 1:
            raise ConfigError("rho_init", "must lie strictly inside (-1, 1)")


@dataclass
class ChainStore:
    """Post-warmup draws, one row per stored iteration."""

    spec: PanelSpec
    Sigma: np.ndarray
    b: np.ndarray
    b_beta_star: np.ndarray
    nu: np.ndarray
    tau: np.ndarray
    rho: np.ndarray
    loglik: np.ndarray
    warmup_boundary: int = 0
    rho_acceptance: float = float("nan")
    _pis: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __len__(self):
        return self.b.shape[0]

    def params(self, d: int) -> VecmParams:
        return VecmParams(
            self.Sigma[d], self.b[d], self.b_beta_star[d],
            float(self.nu[d]), float(self.tau[d]), float(self.rho[d]),
        )

    def pis(self) -> np.ndarray:
        """``(draws, N, n, n)`` long-run matrices."""
        if self._pis is None:
            spec = self.spec
            out = np.zeros((len(self), spec.N, spec.n, spec.n))
            for d in range(len(self)):
                alphas, _ = unpack_b(self.b[d], spec)
                for i, bs in enumerate(unpack_beta_star(self.b_beta_star[d], spec)):
                    if spec.ranks[i]:
                        beta, _ = decompose_beta_star(bs)
                        out[d, i] = alphas[i] @ beta.T
            self._pis = out
        return self._pis

    def cs(self) -> np.ndarray:
        """``(draws, N, k, n)`` short-run blocks ``C_i``."""
        spec = self.spec
        out = np.zeros((len(self), spec.N, spec.k, spec.n))
        for d in range(len(self)):
            _, Cs = unpack_b(self.b[d], spec)
            out[d] = np.stack(Cs)
        return out

    def gammas(self) -> np.ndarray:
        """``(draws, N, L, n, n)`` short-run matrices ``Gamma_{i,h}``."""
        spec = self.spec
        C = self.cs()
        out = np.zeros((len(self), spec.N, spec.L, spec.n, spec.n))
        for h in range(spec.L):
            out[:, :, h] = np.swapaxes(C[:, :, h * spec.n:(h + 1) * spec.n, :], -1, -2)
        return out

    def save(self, path) -> None:
        spec = self.spec
        np.savez_compressed(
            path, Sigma=self.Sigma, b=self.b, b_beta_star=self.b_beta_star, nu=self.nu,
            tau=self.tau, rho=self.rho, loglik=self.loglik,
            warmup_boundary=self.warmup_boundary, rho_acceptance=self.rho_acceptance,
            spec=np.array([spec.N, spec.n, spec.T, spec.L, spec.k_d, *spec.ranks]),
        )

    @classmethod
    def load(cls, path) -> "ChainStore":
        z = np.load(path)
        s = [int(v) for v in z["spec"]]
        spec = PanelSpec(s[0], s[1], s[2], s[3], s[4], tuple(s[5:]))
        return cls(
            spec, z["Sigma"], z["b"], z["b_beta_star"], z["nu"], z["tau"], z["rho"], z["loglik"],
            int(z["warmup_boundary"]), float(z["rho_acceptance"]),
        )


# -- conditional samplers ------------------------------------------------


def gls_moments(y: np.ndarray, x, Sigma: np.ndarray, rho: float):
    """``x' V_e^{-1} x`` and ``x' V_e^{-1} y`` with ``V_e = Sigma kron F_rho``.

    ``x`` may be dense or a :class:`~panel_bvecm.model.BlockDiagonal`; each
    column is reshaped to ``T x Nn`` and premultiplied by ``F^{-1}`` and
    postmultiplied by ``Sigma^{-1}``.
    """
    X = x.toarray() if hasattr(x, "toarray") else np.asarray(x, dtype=float)
    Nn = Sigma.shape[0]
    T = y.shape[0] // Nn
    Sinv = mk.spd_inverse(Sigma, "Sigma")
    Finv = mk.ar1_precision(rho, T)
    Xc = X.T.reshape(X.shape[1], Nn, T).transpose(0, 2, 1)  # columns as T x Nn
    Yc = y.reshape(Nn, T).T
    W = np.matmul(np.matmul(Finv, Xc), Sinv)
    V = np.einsum("psk,qsk->pq", W, Xc)
    rhs = np.einsum("psk,sk->p", W, Yc)
    return 0.5 * (V + V.T), rhs


def gaussian_conditional(V: np.ndarray, rhs: np.ndarray, prior_precision: np.ndarray):
    """Mean and lower Cholesky factor of the precision ``V + prior_precision``.

    The mean is ``(V + prior_precision)^{-1} rhs``; with ``rhs = V bhat`` this
    is the usual shrinkage of the GLS estimate toward the zero prior mean.
    """
    Q = V + prior_precision
    Lq = mk.cholesky(Q, "posterior precision")
    mean = linalg.cho_solve((Lq, True), rhs)
    return mean, Lq


def draw_gaussian(mean: np.ndarray, Lq: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(mean.shape[0])
    return mean + linalg.solve_triangular(Lq.T, z, lower=False)


def sample_sigma(eps: np.ndarray, T: int, rng: np.random.Generator, rho: float = 0.0,
                 prior: Optional[tuple] = None) -> np.ndarray:
    """Draw ``Sigma ~ IW(eps' F^{-1} eps, T)`` (plus prior scale/dof if proper)."""
    Finv = None if rho == 0 else mk.ar1_precision(rho, eps.shape[0])
    S = eps.T @ eps if Finv is None else eps.T @ Finv @ eps
    return sample_sigma_cross(S, T, rng, prior)


def sample_sigma_cross(S: np.ndarray, T: int, rng: np.random.Generator,
                       prior: Optional[tuple] = None) -> np.ndarray:
    p = S.shape[0]
    dof = float(T)
    if prior is not None:
        S = S + prior[0]
        dof += prior[1]
    if dof <= p + 1:
        raise DofTooSmall(f"inverse-Wishart dof {dof:g} must exceed Nn + 1 = {p + 1}")
    return sample_inverse_wishart(S, dof, rng)


def sample_b(y, x, Sigma, rho, nu, vtilde, rng):
    """Draw ``b`` from ``N(mean, (V + nu Vtilde^{-1})^{-1})`` on an explicit system."""
    V, rhs = gls_moments(y, x, Sigma, rho)
    mean, Lq = gaussian_conditional(V, rhs, nu * mk.spd_inverse(vtilde, "Vtilde"))
    return draw_gaussian(mean, Lq, rng)


def sample_b_beta(yhat, xhat, Sigma, rho, nu, vtilde_beta, rng):
    """Same as :func:`sample_b` for the long-run system."""
    V, rhs = gls_moments(yhat, xhat, Sigma, rho)
    mean, Lq = gaussian_conditional(V, rhs, nu * mk.spd_inverse(vtilde_beta, "Vtilde_beta"))
    return draw_gaussian(mean, Lq, rng)


def nu_conditional(b, vtilde_inv, spec: PanelSpec, cfg: PriorConfig):
    """(shape, rate) of ``nu | rest``."""
    quad = float(b @ vtilde_inv @ b)
    if not np.isfinite(quad):
        raise NonFinite("b' Vtilde^{-1} b is not finite")
    shape, rate = cfg.nu_prior(spec)
    return shape + 0.5 * b.shape[0], rate + 0.5 * quad


def sample_nu(b, vtilde_inv, spec, cfg, rng) -> float:
    shape, rate = nu_conditional(b, vtilde_inv, spec, cfg)
    return float(rng.gamma(shape, 1.0 / rate))


def tau_conditional(beta_stars, nu, spec: PanelSpec, cfg: PriorConfig):
    """(shape, rate) of ``1/tau | rest``."""
    if not cfg.restricted:
        raise NoRestriction("tau is only sampled when Hg is configured")
    Hp = cfg.H_perp()
    trace = sum(float(np.sum((Hp.T @ bs) ** 2)) for bs in beta_stars)
    shape, rate = cfg.tau_inv_prior()
    return shape + 0.5 * tau_dof_increment(spec, cfg), rate + 0.5 * nu * trace


def sample_tau(beta_stars, nu, spec, cfg, rng) -> float:
    shape, rate = tau_conditional(beta_stars, nu, spec, cfg)
    return float(1.0 / rng.gamma(shape, 1.0 / rate))


def reflect(x: float) -> float:
    """Fold a proposal back into ``[-1, 1]``."""
    while x > 1 or x < -1:
        x = 2.0 - x if x > 1 else -2.0 - x
    return x


# -- sampler state -------------------------------------------------------


class GibbsState:
    """Mutable per-chain state with the per-individual pieces kept unpacked."""

    def __init__(self, spec: PanelSpec, Sigma, alphas, Cs, betas, beta_stars, As, nu, tau, rho):
        self.spec = spec
        self.Sigma = Sigma
        self.alphas = alphas
        self.Cs = Cs
        self.betas = betas
        self.beta_stars = beta_stars
        self.As = As
        self.nu = nu
        self.tau = tau
        self.rho = rho

    @property
    def Pis(self):
        return [compose_pi(a, bt) if a.shape[1] else np.zeros((self.spec.n, self.spec.n))
                for a, bt in zip(self.alphas, self.betas)]

    def b(self) -> np.ndarray:
        return pack_b(self.alphas, self.Cs)

    def to_params(self) -> VecmParams:
        return VecmParams(self.Sigma.copy(), self.b(), pack_beta_star(self.beta_stars),
                          float(self.nu), float(self.tau), float(self.rho))

    @classmethod
    def from_params(cls, params: VecmParams, spec: PanelSpec) -> "GibbsState":
        alphas, Cs = unpack_b(params.b, spec)
        betas, beta_stars, As = [], [], []
        for a, bs in zip(alphas, unpack_beta_star(params.b_beta_star, spec)):
            if a.shape[1] == 0:
                betas.append(bs.copy())
                beta_stars.append(bs.copy())
                As.append(a.copy())
                continue
            beta, _ = decompose_beta_star(bs)
            betas.append(beta)
            beta_stars.append(bs.copy())
            As.append(normalize_alpha(a))
        return cls(spec, params.Sigma.copy(), alphas, Cs, betas, beta_stars, As,
                   params.nu, params.tau, params.rho)


def _ols(X, Y):
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    return coef


def initial_state(data: PanelData, spec: PanelSpec, prior: PriorConfig, rho: float = 0.0) -> GibbsState:
    """Least-squares starting point.

    ``beta_i`` comes from the leading right singular vectors of the unrestricted
    ``Pi_i`` estimate (restricted to ``sp(H)`` when ``H`` has at least ``r_i``
    columns); ``alpha_i`` and ``C_i`` by least squares given ``beta_i``.
    """
    D = design(data, spec)
    n, k = spec.n, spec.k
    alphas, Cs, betas, beta_stars, As = [], [], [], [], []
    eps = []
    for i, r in enumerate(spec.ranks):
        coef = _ols(np.column_stack([D.ylag[i], D.w[i]]), D.dy[i])
        Pi_hat = coef[:n].T
        if r == 0:
            beta = np.zeros((n, 0))
        elif prior.restricted and prior.H.shape[1] >= r:
            _, _, Vt = np.linalg.svd(Pi_hat @ prior.H)
            beta = prior.H @ Vt[:r].T
        else:
            _, _, Vt = np.linalg.svd(Pi_hat)
            beta = Vt[:r].T
        B = _ols(np.column_stack([D.ylag[i] @ beta, D.w[i]]), D.dy[i])
        alpha = B[:r].T
        C = B[r:]
        if r:
            kappa = mk.sym_sqrt(alpha.T @ alpha)
            A = normalize_alpha(alpha)
            beta, kappa, A = canonical_signs(beta, kappa, A)
            alpha = A @ kappa
            beta_star = beta @ kappa
        else:
            A = np.zeros((n, 0))
            beta_star = np.zeros((n, 0))
        eps.append(D.dy[i] - D.ylag[i] @ beta @ alpha.T - D.w[i] @ C)
        alphas.append(alpha)
        Cs.append(C)
        betas.append(beta)
        beta_stars.append(beta_star)
        As.append(A)
    E = np.hstack(eps)
    Sigma = E.T @ E / spec.T
    shape, rate = prior.nu_prior(spec)
    nu = shape / rate
    if prior.restricted:
        ts, tr = prior.tau_inv_prior()
        tau = tr / ts
    else:
        tau = 1.0
    return GibbsState(spec, Sigma, alphas, Cs, betas, beta_stars, As, nu, tau, rho)


def gibbs_cycle(state: GibbsState, gram: GramCache, prior: PriorConfig, rng: np.random.Generator,
                cc: Optional[ChainConfig] = None) -> bool:
    """Advance ``state`` by one full sweep in place; returns the rho acceptance flag."""
    spec = state.spec
    step = "sigma"
    try:
        sigma_prior = None if isinstance(prior.sigma_prior, str) else prior.sigma_prior
        S = gram.cross(state.Pis, state.Cs)
        state.Sigma = sample_sigma_cross(S, spec.T, rng, sigma_prior)
        Sinv = mk.spd_inverse(state.Sigma, "Sigma")

        step = "b"
        V, rhs = gram.shortrun_normal_equations(state.betas, Sinv)
        Vt_inv = build_vtilde_inv(spec, prior, state.betas, state.tau)
        mean, Lq = gaussian_conditional(V, rhs, state.nu * Vt_inv)
        state.alphas, state.Cs = unpack_b(draw_gaussian(mean, Lq, rng), spec)

        step = "normalize_alpha"
        state.As = [normalize_alpha(a) for a in state.alphas]

        if spec.beta_len:
            step = "b_beta_star"
            Vb, rhsb = gram.longrun_normal_equations(state.As, state.Cs, Sinv)
            mean, Lq = gaussian_conditional(
                Vb, rhsb, state.nu * build_vtilde_beta_inv(spec, prior, state.tau)
            )
            beta_stars = unpack_beta_star(draw_gaussian(mean, Lq, rng), spec)

            step = "decompose"
            for i, bs in enumerate(beta_stars):
                if spec.ranks[i] == 0:
                    continue
                beta, kappa = decompose_beta_star(bs)
                beta, kappa, A = canonical_signs(beta, kappa, state.As[i])
                state.betas[i] = beta
                state.As[i] = A
                state.alphas[i] = A @ kappa
                state.beta_stars[i] = beta @ kappa

        step = "nu"
        Vt_inv = build_vtilde_inv(spec, prior, state.betas, state.tau)
        state.nu = sample_nu(state.b(), Vt_inv, spec, prior, rng)

        if prior.restricted and spec.beta_len:
            step = "tau"
            state.tau = sample_tau(state.beta_stars, state.nu, spec, prior, rng)

        accepted = False
        if cc is not None and cc.rho_sampling:
            step = "rho"
            _, accepted = mh_step_rho(state, gram, spec, cc, rng)
        return accepted
    except ChainAbort:
        raise
    except BvecmError as exc:
        raise ChainAbort(step, -1, exc) from exc


def mh_step_rho(state, gram, spec: PanelSpec, cc: ChainConfig, rng: np.random.Generator):
    """Random-walk Metropolis update of ``rho`` with reflection at +-1.

    Flat prior on ``[-1, 1]``; the acceptance ratio is the likelihood ratio.
    ``state`` may be a :class:`GibbsState` (updated in place) or
    :class:`VecmParams` (left untouched); ``gram`` may be a
    :class:`GramCache` or :class:`PanelData`.
    """
    if isinstance(gram, PanelData):
        gram = GramCache(gram, spec, state.rho)
    if isinstance(state, VecmParams):
        gs = GibbsState.from_params(state, spec)
    else:
        gs = state
    if gram.rho != gs.rho:
        gram.set_rho(gs.rho)
    current = gs.rho
    proposal = reflect(current + cc.rho_proposal_sd * rng.standard_normal())
    u = rng.uniform()
    if proposal == current:
        return current, True
    Pis, Cs = gs.Pis, gs.Cs
    ll_cur = gram.loglik(Pis, Cs, gs.Sigma)
    old_M, old_logdet = gram.M, gram.logdet_F
    try:
        gram.set_rho(proposal)
        ll_new = gram.loglik(Pis, Cs, gs.Sigma)
    except BvecmError:
        ll_new = -np.inf
    if np.isfinite(ll_new) and np.log(u) < ll_new - ll_cur:
        if not isinstance(state, VecmParams):
            gs.rho = proposal
        return proposal, True
    gram.M, gram.logdet_F, gram.rho = old_M, old_logdet, current
    return current, False


def run_chain(data: PanelData, spec: PanelSpec, prior: PriorConfig, cc: ChainConfig,
              callback: Optional[Callable[[dict], None]] = None,
              init: Optional[VecmParams] = None, progress_every: int = 500) -> ChainStore:
    """Run warmup plus ``cc.iterations`` sweeps and keep every ``thin``-th draw.

    ``callback`` receives ``{"iteration", "loglik", "rho_acceptance"}`` every
    ``progress_every`` iterations.
    """
    prior.validate(spec)
    if spec.T <= spec.Nn + 1 and isinstance(prior.sigma_prior, str):
        raise DofTooSmall(f"T={spec.T} must exceed Nn + 1 = {spec.Nn + 1}")
    if isinstance(prior.sigma_prior, str):
        dof = residual_dof(data, spec)
        if dof < spec.Nn:
            logger.warning(
                "only %d residual degrees of freedom for %d series: the posterior is improper "
                "under the improper Sigma prior; use a proper sigma_prior or a longer sample",
                dof, spec.Nn)
    rng = np.random.default_rng(cc.seed)
    rho0 = init.rho if init is not None else cc.rho_init
    gram = GramCache(data, spec, rho0)
    state = (GibbsState.from_params(init, spec) if init is not None
             else initial_state(data, spec, prior, rho0))

    n_keep = cc.iterations // cc.thin
    Nn = spec.Nn
    out = dict(
        Sigma=np.zeros((n_keep, Nn, Nn)), b=np.zeros((n_keep, spec.b_len)),
        b_beta_star=np.zeros((n_keep, spec.beta_len)), nu=np.zeros(n_keep),
        tau=np.zeros(n_keep), rho=np.zeros(n_keep), loglik=np.zeros(n_keep),
    )
    accepted = 0
    total = cc.warmup + cc.iterations
    kept = 0
    for it in range(total):
        try:
            accepted += gibbs_cycle(state, gram, prior, rng, cc)
        except ChainAbort as exc:
            raise ChainAbort(exc.step, it, exc.cause) from exc.cause
        post = it - cc.warmup
        if post >= 0 and (post + 1) % cc.thin == 0 and kept < n_keep:
            ll = gram.loglik(state.Pis, state.Cs, state.Sigma)
            if not np.isfinite(ll):
                raise ChainAbort("loglik", it, NonFinite("log-likelihood is not finite"))
            out["Sigma"][kept] = state.Sigma
            out["b"][kept] = state.b()
            out["b_beta_star"][kept] = pack_beta_star(state.beta_stars)
            out["nu"][kept] = state.nu
            out["tau"][kept] = state.tau
            out["rho"][kept] = state.rho
            out["loglik"][kept] = ll
            kept += 1
        if callback is not None and (it + 1) % progress_every == 0:
            callback({
                "iteration": it + 1,
                "loglik": float(out["loglik"][kept - 1]) if kept else float("nan"),
                "rho_acceptance": accepted / (it + 1) if cc.rho_sampling else float("nan"),
            })
    return ChainStore(
        spec, out["Sigma"], out["b"], out["b_beta_star"], out["nu"], out["tau"], out["rho"],
        out["loglik"], warmup_boundary=cc.warmup,
        rho_acceptance=accepted / total if cc.rho_sampling else float("nan"),
    )
