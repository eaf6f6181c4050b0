"""Panel VECM data model, design matrices and likelihood.

For individual ``i`` and usable period ``t`` the model is::

    dy[i,t] = Pi_i y[i,t-1] + sum_h Gamma_{i,h} dy[i,t-h] + Phi_i d_t + eps[i,t]

with ``Pi_i = alpha_i beta_i'`` of rank ``r_i`` and ``vec(eps)`` Gaussian with
covariance ``Sigma kron F_rho`` (``F_rho`` the AR(1) correlation over time).

The short-run coefficient vector ``b`` stacks ``vec(B_i)`` over individuals,
where ``B_i = (alpha_i, Gamma_{i,1}, ..., Gamma_{i,L}, Phi_i)'`` is
``(r_i + k) x n``. The long-run vector ``b_beta_star`` stacks ``vec(beta*_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from . import matrix_kit as mk
from .errors import DimensionMismatch, InsufficientData, NotPD, RankDeficient

LOG_2PI = float(np.log(2.0 * np.pi))
# relative singular-value floor below which a polar split is refused
POLAR_TOL = 1e-14


@dataclass(frozen=True)
class PanelSpec:
    """Dimensions of a panel VECM.

    ``T`` counts usable rows, i.e. raw length minus ``L + 1`` observations
    consumed by differencing and lagging. ``k = n L + k_d``.
    """

    N: int
    n: int
    T: int
    L: int
    k_d: int
    ranks: tuple

    def __post_init__(self):
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        if len(self.ranks) != self.N:
            raise DimensionMismatch(f"expected {self.N} ranks, got {len(self.ranks)}")
        if self.n < 1 or self.N < 1:
            raise DimensionMismatch("N and n must be positive")
        if self.L < 0 or self.k_d < 0:
            raise DimensionMismatch("L and k_d must be non-negative")
        for r in self.ranks:
            if not 0 <= r <= self.n:
                raise DimensionMismatch(f"rank {r} outside [0, n] for n={self.n}")
        if self.T <= self.k + max(self.ranks):
            raise InsufficientData(
                f"T={self.T} usable rows but k + max(r) = {self.k + max(self.ranks)}"
            )

    @property
    def k(self) -> int:
        return self.n * self.L + self.k_d

    @property
    def rbar(self) -> float:
        return sum(self.ranks) / self.N

    @property
    def Nn(self) -> int:
        return self.N * self.n

    @property
    def b_sizes(self) -> list:
        return [self.n * (self.k + r) for r in self.ranks]

    @property
    def beta_sizes(self) -> list:
        return [self.n * r for r in self.ranks]

    @property
    def b_len(self) -> int:
        return sum(self.b_sizes)

    @property
    def beta_len(self) -> int:
        return sum(self.beta_sizes)

    def b_slices(self) -> list:
        return _slices(self.b_sizes)

    def beta_slices(self) -> list:
        return _slices(self.beta_sizes)

    def with_ranks(self, ranks) -> "PanelSpec":
        return PanelSpec(self.N, self.n, self.T, self.L, self.k_d, tuple(ranks))

    def criteria_parameter_count(self) -> int:
        """Headline count ``Nn(k + 2 rbar + 1) + 2`` (rho fixed)."""
        return int(round(self.Nn * (self.k + 2 * self.rbar + 1))) + 2

    def free_parameter_count(self) -> int:
        """Entries actually carried by a parameter state, Sigma by its triangle."""
        return self.b_len + self.beta_len + self.Nn * (self.Nn + 1) // 2 + 2


def _slices(sizes):
    out, start = [], 0
    for s in sizes:
        out.append(slice(start, start + s))
        start += s
    return out


def deterministic_terms(T0: int, kind: str = "constant") -> np.ndarray:
    """Deterministic regressors ``d_t``: ``none``, ``constant`` or ``trend``."""
    if kind == "none":
        return np.zeros((T0, 0))
    if kind == "constant":
        return np.ones((T0, 1))
    if kind == "trend":
        return np.column_stack([np.ones(T0), np.arange(T0, dtype=float)])
    raise ValueError(f"unknown deterministic kind {kind!r}")


@dataclass
class PanelData:
    """Observed levels, one ``T0 x n`` block per individual.

    ``levels`` has shape ``(N, T0, n)``; ``deterministic`` is ``(T0, k_d)`` and
    is shared by every individual.
    """

    levels: np.ndarray
    deterministic: np.ndarray
    individuals: list = field(default_factory=list)
    variables: list = field(default_factory=list)
    dates: list = field(default_factory=list)

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        if self.levels.ndim != 3:
            raise DimensionMismatch("levels must have shape (N, T0, n)")
        self.deterministic = np.asarray(self.deterministic, dtype=float).reshape(
            self.levels.shape[1], -1
        )
        if not np.all(np.isfinite(self.levels)):
            raise DimensionMismatch("levels contain missing or non-finite values")
        N, T0, n = self.levels.shape
        if not self.individuals:
            self.individuals = [f"unit{i + 1}" for i in range(N)]
        if not self.variables:
            self.variables = [f"y{j + 1}" for j in range(n)]

    @classmethod
    def from_levels(cls, levels, deterministic: str = "constant", **meta) -> "PanelData":
        levels = np.asarray(levels, dtype=float)
        return cls(levels, deterministic_terms(levels.shape[1], deterministic), **meta)

    @property
    def N(self) -> int:
        return self.levels.shape[0]

    @property
    def T0(self) -> int:
        return self.levels.shape[1]

    @property
    def n(self) -> int:
        return self.levels.shape[2]

    @property
    def k_d(self) -> int:
        return self.deterministic.shape[1]

    def spec(self, L: int, ranks) -> PanelSpec:
        if np.isscalar(ranks):
            ranks = [int(ranks)] * self.N
        if self.T0 < L + 2:
            raise InsufficientData(f"need at least L+2={L + 2} observations, got {self.T0}")
        return PanelSpec(self.N, self.n, self.T0 - L - 1, L, self.k_d, tuple(ranks))


@dataclass
class VecmParams:
    """One parameter state of the sampler."""

    Sigma: np.ndarray
    b: np.ndarray
    b_beta_star: np.ndarray
    nu: float
    tau: float
    rho: float = 0.0

    def copy(self) -> "VecmParams":
        return VecmParams(
            self.Sigma.copy(), self.b.copy(), self.b_beta_star.copy(),
            float(self.nu), float(self.tau), float(self.rho),
        )

    def check(self, spec: PanelSpec) -> None:
        if self.b.shape != (spec.b_len,):
            raise DimensionMismatch(f"b has length {self.b.size}, expected {spec.b_len}")
        if self.b_beta_star.shape != (spec.beta_len,):
            raise DimensionMismatch(
                f"b_beta_star has length {self.b_beta_star.size}, expected {spec.beta_len}"
            )
        if self.Sigma.shape != (spec.Nn, spec.Nn):
            raise DimensionMismatch(f"Sigma has shape {self.Sigma.shape}")


@dataclass
class DerivedParams:
    beta: np.ndarray
    kappa: np.ndarray
    A: np.ndarray
    alpha: np.ndarray
    Pi: np.ndarray


@dataclass
class BlockDiagonal:
    """Block-diagonal matrix kept as its list of blocks."""

    blocks: list

    @property
    def shape(self):
        return (sum(b.shape[0] for b in self.blocks), sum(b.shape[1] for b in self.blocks))

    def toarray(self) -> np.ndarray:
        return linalg.block_diag(*self.blocks) if self.blocks else np.zeros((0, 0))

    def __matmul__(self, v):
        v = np.asarray(v, dtype=float)
        out, start = [], 0
        for blk in self.blocks:
            out.append(blk @ v[start:start + blk.shape[1]])
            start += blk.shape[1]
        if start != v.shape[0]:
            raise DimensionMismatch(f"vector of length {v.shape[0]} for {self.shape} matrix")
        return np.concatenate(out)


# -- coefficient packing -------------------------------------------------


def unpack_b(b: np.ndarray, spec: PanelSpec):
    """Split ``b`` into per-individual ``alpha_i`` (n x r_i) and ``C_i`` (k x n)."""
    alphas, Cs = [], []
    for sl, r in zip(spec.b_slices(), spec.ranks):
        B = mk.unvec(b[sl], spec.k + r, spec.n)
        alphas.append(B[:r].T.copy())
        Cs.append(B[r:].copy())
    return alphas, Cs


def pack_b(alphas: Sequence[np.ndarray], Cs: Sequence[np.ndarray]) -> np.ndarray:
    parts = [mk.vec(np.vstack([a.T, C])) for a, C in zip(alphas, Cs)]
    return np.concatenate(parts) if parts else np.zeros(0)


def unpack_beta_star(b_beta_star: np.ndarray, spec: PanelSpec) -> list:
    return [mk.unvec(b_beta_star[sl], spec.n, r) for sl, r in zip(spec.beta_slices(), spec.ranks)]


def pack_beta_star(beta_stars: Sequence[np.ndarray]) -> np.ndarray:
    parts = [mk.vec(bs) for bs in beta_stars]
    return np.concatenate(parts) if parts else np.zeros(0)


def split_C(C: np.ndarray, spec: PanelSpec):
    """``C_i`` (k x n) into the list of ``Gamma_h`` (n x n) and ``Phi`` (n x k_d)."""
    n = spec.n
    gammas = [C[h * n:(h + 1) * n].T.copy() for h in range(spec.L)]
    phi = C[n * spec.L:].T.copy()
    return gammas, phi


def join_C(gammas: Sequence[np.ndarray], phi: np.ndarray) -> np.ndarray:
    blocks = [g.T for g in gammas] + [np.atleast_2d(phi).T]
    return np.vstack(blocks)


# -- reparameterisation --------------------------------------------------


def compose_pi(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    alpha = np.atleast_2d(alpha)
    beta = np.atleast_2d(beta)
    if alpha.shape != beta.shape:
        raise DimensionMismatch(f"alpha {alpha.shape} vs beta {beta.shape}")
    return alpha @ beta.T


def decompose_beta_star(beta_star: np.ndarray):
    """Polar split ``beta_star = beta kappa`` with ``kappa = (beta*' beta*)^{1/2}``."""
    beta_star = np.atleast_2d(np.asarray(beta_star, dtype=float))
    if beta_star.shape[1] == 0:
        return beta_star.copy(), np.zeros((0, 0))
    # from the thin SVD beta* = U S V': beta = U V', kappa = V S V'; no squaring,
    # so small loadings keep full precision
    U, s, Vt = _checked_svd(beta_star, "beta_star")
    kappa = (Vt.T * s) @ Vt
    return U @ Vt, 0.5 * (kappa + kappa.T)


def _checked_svd(M: np.ndarray, name: str):
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.min() <= POLAR_TOL * max(1.0, s.max()):
        raise RankDeficient(f"{name} has smallest singular value {s.min():.3g}")
    return U, s, Vt


def normalize_alpha(alpha: np.ndarray) -> np.ndarray:
    """``alpha (alpha' alpha)^{-1/2}``."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    if alpha.shape[1] == 0:
        return alpha.copy()
    U, _, Vt = _checked_svd(alpha, "alpha")
    return U @ Vt


def canonical_signs(beta, kappa, A):
    """Flip columns so the first row of ``beta`` is non-negative.

    Applies the same diagonal sign matrix ``D`` to ``beta``, ``A`` and
    ``kappa -> D kappa D``; ``Pi`` is unchanged.
    """
    if beta.shape[1] == 0:
        return beta, kappa, A
    d = np.where(beta[0] < 0, -1.0, 1.0)
    return beta * d, kappa * np.outer(d, d), A * d


def derive(params: VecmParams, spec: PanelSpec) -> list:
    """Per-individual ``beta, kappa, A, alpha, Pi`` from a parameter state."""
    alphas, _ = unpack_b(params.b, spec)
    out = []
    for alpha, bs in zip(alphas, unpack_beta_star(params.b_beta_star, spec)):
        if alpha.shape[1] == 0:
            z = np.zeros((spec.n, 0))
            out.append(DerivedParams(z, np.zeros((0, 0)), z, z, np.zeros((spec.n, spec.n))))
            continue
        beta, kappa = decompose_beta_star(bs)
        out.append(DerivedParams(beta, kappa, normalize_alpha(alpha), alpha, compose_pi(alpha, beta)))
    return out


def pis_and_cs(params: VecmParams, spec: PanelSpec):
    """Long-run matrices ``Pi_i = alpha_i beta_i'`` and short-run blocks ``C_i`` of a state."""
    alphas, Cs = unpack_b(params.b, spec)
    Pis = []
    for alpha, bs in zip(alphas, unpack_beta_star(params.b_beta_star, spec)):
        if alpha.shape[1] == 0:
            Pis.append(np.zeros((spec.n, spec.n)))
        else:
            Pis.append(alpha @ decompose_beta_star(bs)[0].T)
    return Pis, Cs


# -- data views ----------------------------------------------------------


@dataclass
class Design:
    """Per-individual arrays over the usable sample (each ``T`` rows)."""

    dy: list      # T x n
    ylag: list    # T x n, levels at t-1
    w: list       # T x k, lagged differences then deterministic terms


def design(data: PanelData, spec: PanelSpec) -> Design:
    if data.N != spec.N or data.n != spec.n or data.k_d != spec.k_d:
        raise DimensionMismatch("data and spec disagree on N, n or k_d")
    if data.T0 - spec.L - 1 != spec.T:
        raise DimensionMismatch(f"data has {data.T0} rows, spec expects {spec.T + spec.L + 1}")
    L, T = spec.L, spec.T
    rows = np.arange(L + 1, data.T0)
    d_t = data.deterministic[rows]
    dys, ylags, ws = [], [], []
    for i in range(spec.N):
        y = data.levels[i]
        diff = np.vstack([np.full((1, spec.n), np.nan), np.diff(y, axis=0)])
        dys.append(diff[rows])
        ylags.append(y[rows - 1])
        lagged = [diff[rows - h] for h in range(1, L + 1)]
        ws.append(np.column_stack(lagged + [d_t]) if (lagged or spec.k_d) else np.zeros((T, 0)))
    return Design(dys, ylags, ws)


def residual_dof(data: PanelData, spec: PanelSpec) -> int:
    """Rows left after projecting on the union of every individual's regressors.

    Below ``Nn`` some combination of residuals across individuals can be fitted
    exactly, so with the improper ``Sigma`` prior the likelihood is unbounded
    and the chain can drift into a singular ``Sigma``.
    """
    D = design(data, spec)
    cols = [D.w[i] for i in range(spec.N)]
    cols += [D.ylag[i] for i in range(spec.N) if spec.ranks[i]]
    X = np.column_stack(cols) if cols else np.zeros((spec.T, 0))
    return spec.T - (int(np.linalg.matrix_rank(X)) if X.shape[1] else 0)


def build_shortrun_system(data: PanelData, spec: PanelSpec, betas: Sequence[np.ndarray]):
    """Stacked regression ``y = x b + e`` given the cointegrating vectors.

    Returns ``y`` (length ``T N n``) and ``x`` as a :class:`BlockDiagonal` with
    blocks ``I_n kron X_i``, ``X_i = [y_{i,-1} beta_i, w_i]``.
    """
    D = design(data, spec)
    ys, blocks = [], []
    for i, beta in enumerate(betas):
        beta = np.asarray(beta, dtype=float).reshape(spec.n, -1)
        if beta.shape[1] != spec.ranks[i]:
            raise DimensionMismatch(f"beta_{i} has {beta.shape[1]} columns, rank is {spec.ranks[i]}")
        X = np.column_stack([D.ylag[i] @ beta, D.w[i]])
        ys.append(mk.vec(D.dy[i]))
        blocks.append(np.kron(np.eye(spec.n), X))
    return np.concatenate(ys), BlockDiagonal(blocks)


def build_longrun_system(data: PanelData, spec: PanelSpec, As, Cs):
    """Stacked regression ``yhat = xhat b_beta_star + e`` given ``A_i`` and ``C_i``."""
    D = design(data, spec)
    ys, blocks = [], []
    for i, (A, C) in enumerate(zip(As, Cs)):
        A = np.asarray(A, dtype=float).reshape(spec.n, -1)
        C = np.asarray(C, dtype=float).reshape(-1, spec.n) if spec.k else np.zeros((0, spec.n))
        if A.shape[1] != spec.ranks[i] or C.shape != (spec.k, spec.n):
            raise DimensionMismatch(f"A_{i} {A.shape} or C_{i} {C.shape} do not match spec")
        ys.append(mk.vec(D.dy[i] - D.w[i] @ C))
        blocks.append(np.kron(A, D.ylag[i]))
    return np.concatenate(ys), BlockDiagonal(blocks)


def residuals_from(data: PanelData, spec: PanelSpec, Pis, Cs) -> np.ndarray:
    D = design(data, spec)
    cols = [D.dy[i] - D.ylag[i] @ Pis[i].T - D.w[i] @ Cs[i] for i in range(spec.N)]
    return np.hstack(cols)


def residuals(data: PanelData, spec: PanelSpec, params: VecmParams) -> np.ndarray:
    """``T x Nn`` residual matrix, individuals' columns side by side."""
    params.check(spec)
    Pis, Cs = pis_and_cs(params, spec)
    return residuals_from(data, spec, Pis, Cs)


# -- likelihood ----------------------------------------------------------


def _time_precision(rho: float, T: int):
    if rho == 0:
        return None, 0.0
    return mk.ar1_precision(rho, T), mk.ar1_logdet(rho, T)


def loglik_from_cross(S: np.ndarray, Sigma: np.ndarray, T: int, logdet_F: float) -> float:
    """Gaussian log-density given ``S = eps' F^{-1} eps``."""
    Nn = Sigma.shape[0]
    Lc = mk.cholesky(Sigma, "Sigma")
    logdet_S = mk.logdet_from_chol(Lc)
    Y = linalg.solve_triangular(Lc, S, lower=True)
    quad = float(np.trace(linalg.solve_triangular(Lc, Y.T, lower=True)))
    return -0.5 * (T * Nn * LOG_2PI + T * logdet_S + Nn * logdet_F + quad)


def loglik_residuals(eps: np.ndarray, Sigma: np.ndarray, rho: float = 0.0) -> float:
    T = eps.shape[0]
    Finv, logdet_F = _time_precision(rho, T)
    S = eps.T @ eps if Finv is None else eps.T @ Finv @ eps
    return loglik_from_cross(S, Sigma, T, logdet_F)


def log_likelihood(data: PanelData, spec: PanelSpec, params: VecmParams) -> float:
    """Log density of ``vec(eps) ~ N(0, Sigma kron F_rho)`` including constants."""
    return loglik_residuals(residuals(data, spec, params), params.Sigma, params.rho)


def pointwise_loglik(eps: np.ndarray, Sigma: np.ndarray, rho: float = 0.0) -> np.ndarray:
    """Per-period log densities that sum to :func:`loglik_residuals`.

    Uses the AR(1) factorisation ``eps_t | eps_{t-1} ~ N(rho eps_{t-1}, (1-rho^2) Sigma)``.
    """
    T, Nn = eps.shape
    Lc = mk.cholesky(Sigma, "Sigma")
    logdet = mk.logdet_from_chol(Lc)
    innov = eps.copy()
    scale = np.ones(T)
    if rho != 0 and T > 1:
        innov[1:] = eps[1:] - rho * eps[:-1]
        scale[1:] = 1.0 - rho * rho
    z = linalg.solve_triangular(Lc, innov.T, lower=True)
    quad = np.sum(z * z, axis=0) / scale
    return -0.5 * (Nn * LOG_2PI + logdet + Nn * np.log(scale) + quad)


class GramCache:
    """Cross-moment matrix of ``[y_{-1}, w, dy]`` for all individuals.

    Every quantity the sampler needs (residual cross products, GLS normal
    equations for both regressions) is a small quadratic form in
    ``M = Z' F_rho^{-1} Z``, so per-iteration cost does not grow with ``T``.
    """

    def __init__(self, data: PanelData, spec: PanelSpec, rho: float = 0.0, design_: Optional[Design] = None):
        self.spec = spec
        self.D = design_ if design_ is not None else design(data, spec)
        self.width = 2 * spec.n + spec.k
        self.Z = np.hstack(
            [np.column_stack([self.D.ylag[i], self.D.w[i], self.D.dy[i]]) for i in range(spec.N)]
        )
        self.set_rho(rho)

    def set_rho(self, rho: float) -> None:
        Finv, self.logdet_F = _time_precision(rho, self.spec.T)
        self.rho = rho
        FZ = self.Z if Finv is None else Finv @ self.Z
        self.M = self.Z.T @ FZ

    def _blk(self, i, j, rows, cols):
        w = self.width
        return self.M[i * w + rows.start:i * w + rows.stop, j * w + cols.start:j * w + cols.stop]

    @property
    def _yw(self):
        return slice(0, self.spec.n + self.spec.k)

    @property
    def _ylag(self):
        return slice(0, self.spec.n)

    @property
    def _wdy(self):
        return slice(self.spec.n, self.width)

    @property
    def _dy(self):
        return slice(self.spec.n + self.spec.k, self.width)

    def cross(self, Pis, Cs) -> np.ndarray:
        """``eps' F^{-1} eps`` for the given ``Pi_i`` and ``C_i``."""
        n, N = self.spec.n, self.spec.N
        R = np.zeros((N * self.width, N * n))
        for i in range(N):
            R[i * self.width:(i + 1) * self.width, i * n:(i + 1) * n] = np.vstack(
                [-Pis[i].T, -Cs[i], np.eye(n)]
            )
        S = R.T @ self.M @ R
        return 0.5 * (S + S.T)

    def loglik(self, Pis, Cs, Sigma) -> float:
        return loglik_from_cross(self.cross(Pis, Cs), Sigma, self.spec.T, self.logdet_F)

    def shortrun_normal_equations(self, betas, Sigma_inv):
        """``x' V_e^{-1} x`` and ``x' V_e^{-1} y`` for the short-run system."""
        spec = self.spec
        n, k, N = spec.n, spec.k, spec.N
        Qs = [linalg.block_diag(np.asarray(betas[i]).reshape(n, -1), np.eye(k)) for i in range(N)]
        sl = spec.b_slices()
        V = np.zeros((spec.b_len, spec.b_len))
        rhs = np.zeros(spec.b_len)
        for i in range(N):
            Si = slice(i * n, (i + 1) * n)
            acc = np.zeros((Qs[i].shape[1], n))
            for j in range(N):
                Sj = slice(j * n, (j + 1) * n)
                XtX = Qs[i].T @ self._blk(i, j, self._yw, self._yw) @ Qs[j]
                V[sl[i], sl[j]] = np.kron(Sigma_inv[Si, Sj], XtX)
                acc += Qs[i].T @ self._blk(i, j, self._yw, self._dy) @ Sigma_inv[Sj, Si]
            rhs[sl[i]] = mk.vec(acc)
        return 0.5 * (V + V.T), rhs

    def longrun_normal_equations(self, As, Cs, Sigma_inv):
        """``xhat' V_e^{-1} xhat`` and ``xhat' V_e^{-1} yhat`` for the long-run system."""
        spec = self.spec
        n, N = spec.n, spec.N
        sl = spec.beta_slices()
        V = np.zeros((spec.beta_len, spec.beta_len))
        rhs = np.zeros(spec.beta_len)
        for i in range(N):
            if spec.ranks[i] == 0:
                continue
            Si = slice(i * n, (i + 1) * n)
            acc = np.zeros((n, n))
            for j in range(N):
                Sj = slice(j * n, (j + 1) * n)
                yhat_j = self._blk(i, j, self._ylag, self._wdy) @ np.vstack([-Cs[j], np.eye(n)])
                acc += yhat_j @ Sigma_inv[Sj, Si]
                if spec.ranks[j] == 0:
                    continue
                V[sl[i], sl[j]] = np.kron(
                    As[i].T @ Sigma_inv[Si, Sj] @ As[j], self._blk(i, j, self._ylag, self._ylag)
                )
            rhs[sl[i]] = mk.vec(acc @ As[i])
        return 0.5 * (V + V.T), rhs
