"""Small linear-algebra toolkit shared by the model, prior and sampler code.

Conventions: ``vec`` stacks columns (Fortran order), every function takes and
returns plain ``numpy`` arrays and never mutates its inputs.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import linalg

from .errors import NotPD, NotPSD, NotSymmetric, OutOfRange, RankDeficient

logger = logging.getLogger(__name__)

SYM_TOL = 1e-10
EIG_TOL = 1e-10


def vec(M: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a 1-d vector."""
    return np.asarray(M, dtype=float).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(v, dtype=float).reshape((rows, cols), order="F")


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def _check_symmetric(M: np.ndarray) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1]:
        raise NotSymmetric(f"matrix is not square: {M.shape}")
    if M.size and np.max(np.abs(M - M.T)) > SYM_TOL:
        raise NotSymmetric(f"max asymmetry {np.max(np.abs(M - M.T)):.3g}")
    return 0.5 * (M + M.T)


def _psd_eigh(M: np.ndarray):
    M = _check_symmetric(M)
    w, Q = np.linalg.eigh(M)
    if w.size and w.min() < -EIG_TOL:
        raise NotPSD(f"smallest eigenvalue {w.min():.3g}")
    return np.clip(w, 0.0, None), Q


def sym_sqrt(M: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in ``[-1e-10, 0)`` are clamped to zero; anything more negative
    raises :class:`NotPSD`.
    """
    w, Q = _psd_eigh(M)
    S = (Q * np.sqrt(w)) @ Q.T
    return 0.5 * (S + S.T)


def inv_sym_sqrt(M: np.ndarray) -> np.ndarray:
    """``M^{-1/2}`` for symmetric positive definite ``M``."""
    w, Q = _psd_eigh(M)
    if w.size and w.min() <= EIG_TOL * max(1.0, w.max()):
        raise RankDeficient(f"matrix is singular (smallest eigenvalue {w.min():.3g})")
    S = (Q / np.sqrt(w)) @ Q.T
    return 0.5 * (S + S.T)


def _column_rank_check(H: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    s = np.linalg.svd(H, compute_uv=False)
    if s.size < H.shape[1] or (s.size and s.min() <= tol * max(1.0, s.max())):
        raise RankDeficient(f"matrix of shape {H.shape} is not of full column rank")
    return s


def _fix_column_signs(M: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    M = M.copy()
    for j in range(M.shape[1]):
        nz = np.flatnonzero(np.abs(M[:, j]) > tol)
        if nz.size and M[nz[0], j] < 0:
            M[:, j] *= -1.0
    return M


def orth_complement(H: np.ndarray) -> np.ndarray:
    """Semi-orthogonal basis of the orthogonal complement of ``sp(H)``.

    Each returned column has its first nonzero entry positive, which pins down
    an otherwise arbitrary sign.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n, m = H.shape
    if m == 0:
        return np.eye(n)
    if m >= n:
        raise RankDeficient(f"H must have fewer columns than rows, got {H.shape}")
    _column_rank_check(H)
    U, _, _ = np.linalg.svd(H, full_matrices=True)
    return _fix_column_signs(U[:, m:])


def normalize_semiorthogonal(Hg: np.ndarray) -> np.ndarray:
    """``Hg (Hg' Hg)^{-1/2}``: same column span, orthonormal columns."""
    Hg = np.atleast_2d(np.asarray(Hg, dtype=float))
    _column_rank_check(Hg)
    return Hg @ inv_sym_sqrt(Hg.T @ Hg)


def projector(H: np.ndarray, t: float) -> np.ndarray:
    """``H H' + t H_perp H_perp'`` for semi-orthogonal ``H``."""
    if t < 0:
        raise OutOfRange(f"t must be non-negative, got {t}")
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Hp = orth_complement(H)
    P = H @ H.T + t * (Hp @ Hp.T)
    return 0.5 * (P + P.T)


def ar1_correlation(rho: float, T: int) -> np.ndarray:
    """T x T matrix with entries ``rho**|i-j|``."""
    if abs(rho) > 1:
        raise OutOfRange(f"|rho| must be <= 1, got {rho}")
    idx = np.arange(T)
    lag = np.abs(idx[:, None] - idx[None, :])
    if rho == 0:
        return np.eye(T)
    return np.power(float(rho), lag)


def ar1_precision(rho: float, T: int) -> np.ndarray:
    """Closed-form inverse of :func:`ar1_correlation` (tridiagonal), |rho| < 1."""
    if abs(rho) >= 1:
        raise NotPD(f"AR(1) correlation is singular for |rho| = {abs(rho)}")
    if rho == 0:
        return np.eye(T)
    Q = np.zeros((T, T))
    d = np.full(T, 1.0 + rho * rho)
    d[0] = d[-1] = 1.0
    if T == 1:
        d[0] = 1.0 - rho * rho
    Q[np.diag_indices(T)] = d
    off = np.arange(T - 1)
    Q[off, off + 1] = -rho
    Q[off + 1, off] = -rho
    return Q / (1.0 - rho * rho)


def ar1_logdet(rho: float, T: int) -> float:
    if abs(rho) >= 1:
        raise NotPD(f"AR(1) correlation is singular for |rho| = {abs(rho)}")
    return (T - 1) * np.log1p(-rho * rho)


def cholesky(M: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor; retries once with ``1e-10 I`` jitter."""
    M = 0.5 * (M + M.T)
    try:
        return linalg.cholesky(M, lower=True)
    except linalg.LinAlgError:
        pass
    jitter = 1e-10 * max(1.0, float(np.max(np.abs(np.diag(M)))) if M.size else 1.0)
    logger.warning("Cholesky of %s failed; retrying with jitter %.1e", what, jitter)
    try:
        return linalg.cholesky(M + jitter * np.eye(M.shape[0]), lower=True)
    except linalg.LinAlgError as exc:
        raise NotPD(f"{what} is not positive definite") from exc


def spd_inverse(M: np.ndarray, what: str = "matrix") -> np.ndarray:
    L = cholesky(M, what)
    Linv = linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True)
    return Linv.T @ Linv


def logdet_from_chol(L: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(L))))
