"""Shared builders for random but internally consistent test instances."""

import numpy as np

from panel_bvecm import matrix_kit as mk
from panel_bvecm.model import PanelData, PanelSpec, VecmParams, pack_b, pack_beta_star


def random_spd(rng, p, scale=1.0):
    X = rng.standard_normal((p + 3, p))
    return scale * (X.T @ X / (p + 3) + 0.3 * np.eye(p))


def random_params(spec: PanelSpec, rng, scale=0.3, nu=2.0, tau=0.5, rho=0.0) -> VecmParams:
    alphas, Cs, bstars = [], [], []
    for r in spec.ranks:
        beta = np.linalg.qr(rng.standard_normal((spec.n, r)))[0] if r else np.zeros((spec.n, 0))
        alpha = scale * rng.standard_normal((spec.n, r))
        bstars.append(beta @ mk.sym_sqrt(alpha.T @ alpha) if r else np.zeros((spec.n, 0)))
        alphas.append(alpha)
        Cs.append(scale * rng.standard_normal((spec.k, spec.n)))
    return VecmParams(random_spd(rng, spec.Nn), pack_b(alphas, Cs), pack_beta_star(bstars),
                      nu, tau, rho)


def random_data(spec: PanelSpec, rng) -> PanelData:
    T0 = spec.T + spec.L + 1
    levels = np.cumsum(rng.standard_normal((spec.N, T0, spec.n)), axis=1)
    if spec.k_d == 1:
        det = np.ones((T0, 1))
    else:
        det = rng.standard_normal((T0, spec.k_d))
    return PanelData(levels, det)


def dense_gaussian_logpdf(e, Sigma, rho, T):
    """Log density of ``e ~ N(0, Sigma kron F_rho)`` with the covariance formed explicitly."""
    from scipy import stats

    V = np.kron(Sigma, mk.ar1_correlation(rho, T))
    return float(stats.multivariate_normal(np.zeros(len(e)), V).logpdf(e))
