"""Joint-distribution ("getting it right") test of the Gibbs cycle.

Two simulators of ``p(theta, y)`` are compared on a tiny model:

* marginal-conditional: ``theta ~ prior``, ``y ~ p(y | theta)``, independent;
* successive-conditional: alternate one Gibbs sweep ``theta ~ p(theta | y)``
  with a fresh ``y ~ p(y | theta)``.

If every conditional is correct both produce the prior marginal for
``theta``; test-function means are compared with z-scores whose successive
side uses an effective-sample-size corrected standard error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .analytics import effective_sample_size
from .gibbs import GibbsState, gibbs_cycle
from .model import GramCache, PanelData, PanelSpec, VecmParams, deterministic_terms, pis_and_cs
from .priors import PriorConfig, sample_prior
from .simulator import simulate_errors, simulate_from_params, simulate_levels

TEST_FUNCTIONS = ("Pi00", "Pi10", "Phi0", "Phi1", "logSigma00", "Sigma01", "log_nu", "log_tau")


def default_geweke_setup(T: int = 5):
    """``N=1, n=2, r=1, L=0`` with a constant, proper priors throughout.

    A short sample and a wide ``Sigma`` prior keep the data weakly informative,
    so the successive-conditional chain mixes quickly.
    """
    spec = PanelSpec(1, 2, T, 0, 1, (1,))
    prior = PriorConfig(
        mu_nu=2.0, nu_nu=8.0, mu_tau=5.0, nu_tau=15.0, Hg=np.array([[1.0], [-1.0]]),
        v_diffuse=1.0, sigma_prior=(10.0 * np.eye(2), 7.0),
    )
    init = np.array([[[1.0, -0.5]]])
    return spec, prior, init


def summary_functions(params: VecmParams, spec: PanelSpec) -> np.ndarray:
    """Sign-invariant scalar summaries of a state (first individual)."""
    Pis, Cs = pis_and_cs(params, spec)
    return _summaries(Pis[0], Cs[0], params.Sigma, params.nu, params.tau, spec)


def _summaries(Pi, C, S, nu, tau, spec):
    phi = C[spec.n * spec.L:]
    return np.array([
        Pi[0, 0], Pi[1, 0], phi[0, 0], phi[0, 1], np.log(S[0, 0]), S[0, 1], np.log(nu), np.log(tau),
    ])


@dataclass
class GewekeResult:
    names: tuple
    mc_mean: np.ndarray
    sc_mean: np.ndarray
    z: np.ndarray
    sc_ess: np.ndarray

    def passed(self, bound: float = 4.0) -> bool:
        return bool(np.all(np.abs(self.z) < bound))

    def table(self) -> list:
        return [
            {"function": n, "marginal": float(a), "successive": float(b), "z": float(z), "ess": float(e)}
            for n, a, b, z, e in zip(self.names, self.mc_mean, self.sc_mean, self.z, self.sc_ess)
        ]


def marginal_conditional(spec, prior, draws, rng) -> np.ndarray:
    return np.stack([summary_functions(sample_prior(spec, prior, rng), spec) for _ in range(draws)])


def successive_conditional(spec, prior, init, cycles, rng,
                           progress: Optional[Callable[[int], None]] = None) -> np.ndarray:
    T0 = spec.T + spec.L + 1
    det = deterministic_terms(T0, "constant" if spec.k_d == 1 else "none")
    params = sample_prior(spec, prior, rng)
    data = simulate_from_params(params, spec, det, init, rng)
    state = GibbsState.from_params(params, spec)
    out = np.zeros((cycles, len(TEST_FUNCTIONS)))
    for c in range(cycles):
        gibbs_cycle(state, GramCache(data, spec), prior, rng)
        Pis, Cs = state.Pis, state.Cs
        out[c] = _summaries(Pis[0], Cs[0], state.Sigma, state.nu, state.tau, spec)
        eps = simulate_errors(state.Sigma, T0, rng)
        data = PanelData(simulate_levels(Pis, Cs, spec.L, det, eps, init), det)
        if progress is not None and (c + 1) % 10000 == 0:
            progress(c + 1)
    return out


def geweke_test(cycles: int = 100_000, prior_draws: Optional[int] = None, seed: int = 0,
                setup=None) -> GewekeResult:
    spec, prior, init = setup or default_geweke_setup()
    rng = np.random.default_rng(seed)
    mc = marginal_conditional(spec, prior, prior_draws or cycles, rng)
    sc = successive_conditional(spec, prior, init, cycles, rng)
    ess = np.array([effective_sample_size(sc[:, j]) for j in range(sc.shape[1])])
    se = np.sqrt(mc.var(axis=0, ddof=1) / mc.shape[0] + sc.var(axis=0, ddof=1) / ess)
    z = (mc.mean(axis=0) - sc.mean(axis=0)) / se
    return GewekeResult(TEST_FUNCTIONS, mc.mean(axis=0), sc.mean(axis=0), z, ess)
