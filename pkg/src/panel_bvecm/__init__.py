"""Bayesian cointegrated panel VECM estimated by Gibbs sampling.

The public names below are imported lazily so that ``panel_bvecm.cli`` can
set BLAS thread limits before ``numpy`` loads.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "PanelSpec": "model", "PanelData": "model", "VecmParams": "model",
    "log_likelihood": "model", "GramCache": "model",
    "PriorConfig": "priors", "sample_prior": "priors", "log_prior": "priors",
    "ChainConfig": "gibbs", "ChainStore": "gibbs", "run_chain": "gibbs",
    "fevd": "analytics", "irf": "analytics", "information_criteria": "analytics",
    "rank_profile": "analytics", "diagnostics": "analytics", "vecm_to_var": "analytics",
    "effective_sample_size": "analytics", "summarize": "analytics",
    "Scenario": "simulator", "simulate_panel": "simulator", "accuracy_report": "simulator",
    "run_study": "simulator", "load_default_truth": "simulator",
    "ingest_csv": "io", "export_csv": "io",
    "geweke_test": "geweke",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
