"""Command-line interface.

``panel-bvecm COMMAND [--config run.yaml] [flags]`` with commands ``fit``,
``simulate``, ``study``, ``fevd``, ``diagnose``, ``rank-profile`` and
``criteria``. Settings come from an optional YAML file; flags override it
and ``PANEL_BVECM_OUTPUT`` / ``PANEL_BVECM_THREADS`` override the output
directory and the thread count when the matching flag is absent.

Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
3 data or I/O error, 4 numerical failure during estimation. Errors are
printed to stderr as one JSON object; no partial output directory is left
behind.
"""

from __future__ import annotations

import os

_threads = os.environ.get("PANEL_BVECM_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse  # noqa: E402
import copy  # noqa: E402
import hashlib  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import platform  # noqa: E402
import shutil  # noqa: E402
import sys  # noqa: E402
import tempfile  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402
import scipy  # noqa: E402
import yaml  # noqa: E402

from . import __version__  # noqa: E402
from . import analytics as an  # noqa: E402
from .errors import (  # noqa: E402
    ChainAbort,
    ConfigError,
    DataError,
    DimensionMismatch,
    DofTooSmall,
    ImproperPrior,
    InsufficientData,
    NumericalError,
)
from .gibbs import ChainConfig, ChainStore, run_chain  # noqa: E402
from .io import export_csv, ingest_csv, minmax_scale, write_rows_csv  # noqa: E402
from .priors import PriorConfig  # noqa: E402
from .simulator import (  # noqa: E402
    SCENARIO_LENGTHS,
    SCENARIO_SYNONYMS,
    Scenario,
    TruthFixture,
    load_default_truth,
    run_study,
    simulate_panel,
)

logger = logging.getLogger("panel_bvecm")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4
COMMANDS = ("fit", "simulate", "study", "fevd", "diagnose", "rank-profile", "criteria")
SUMMARY_FIELDS = ("parameter", "mean", "sd", "q2.5", "q97.5", "ess", "mcse")

DEFAULTS = {
    "input": None,
    "output": "panel_bvecm_out",
    "chain_path": None,
    "deterministic": "constant",
    "L": 1,
    "ranks": 1,
    "scale": False,
    "prior": {
        "mu_nu": 21.0, "nu_nu": 42.0, "mu_tau": 5.0, "nu_tau": 15.0, "Hg": None,
        "v_diffuse": 1000.0, "sigma_prior": "improper", "gamma_convention": "mean_dof",
        "alpha_prior": "projection",
    },
    "chain": {
        "warmup": 1000, "iterations": 10000, "seed": 0, "thin": 1,
        "rho_sampling": False, "rho_proposal_sd": 0.05, "rho_init": 0.0,
    },
    "analytics": {"horizon": 16, "rank_list": [0, 1, 2, 3], "lags": [1, 2, 3, 4], "ppp_draws": 1000},
    "simulate": {"scenario": "moderate", "T": None, "seed": 0, "truth": None},
    "study": {"scenarios": ["short", "moderate", "large"], "seed": 0, "truth": None},
    "threads": 1,
}


# -- configuration -------------------------------------------------------


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{path}{k}"
        if k not in base:
            raise ConfigError(key, "unknown configuration key")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(key, "must be a mapping")
            out[k] = _merge(base[k], v, key + ".")
        else:
            out[k] = v
    return out


def _set_dotted(cfg: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(dotted, "unknown configuration key")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(dotted, "unknown configuration key")
    node[parts[-1]] = value


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be a mapping")
    return doc


FLAG_KEYS = {
    "input": "input", "output": "output", "chain": "chain_path", "deterministic": "deterministic",
    "L": "L", "ranks": "ranks", "scale": "scale", "threads": "threads",
    "warmup": "chain.warmup", "iterations": "chain.iterations", "seed": "chain.seed",
    "thin": "chain.thin", "rho_sampling": "chain.rho_sampling",
    "rho_proposal_sd": "chain.rho_proposal_sd", "horizon": "analytics.horizon",
    "rank_list": "analytics.rank_list", "lags": "analytics.lags",
    "scenario": "simulate.scenario", "T": "simulate.T", "scenarios": "study.scenarios",
    "truth": "simulate.truth",
}


def resolve_config(args: argparse.Namespace, environ=os.environ) -> dict:
    """Defaults < config file < environment < flags."""
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        cfg = _merge(cfg, load_config(args.config))
    if environ.get("PANEL_BVECM_OUTPUT"):
        cfg["output"] = environ["PANEL_BVECM_OUTPUT"]
    if environ.get("PANEL_BVECM_THREADS"):
        cfg["threads"] = environ["PANEL_BVECM_THREADS"]
    for attr, key in FLAG_KEYS.items():
        v = getattr(args, attr, None)
        if v is not None:
            _set_dotted(cfg, key, v)
            if attr == "truth":
                cfg["study"]["truth"] = v
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(item, "--set expects KEY=VALUE")
        k, v = item.split("=", 1)
        _set_dotted(cfg, k.strip(), yaml.safe_load(v))
    validate_config(cfg, args.command)
    return cfg


def _int(cfg, key, lo=None):
    node = cfg
    for p in key.split("."):
        node = node[p]
    try:
        v = int(node)
    except (TypeError, ValueError):
        raise ConfigError(key, f"must be an integer, got {node!r}") from None
    if isinstance(node, float) and node != v:
        raise ConfigError(key, f"must be an integer, got {node!r}")
    if lo is not None and v < lo:
        raise ConfigError(key, f"must be >= {lo}")
    return v


def _int_list(value, key):
    if isinstance(value, (int, np.integer)):
        return [int(value)]
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split()]
    try:
        return [int(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(key, f"must be an integer or list of integers, got {value!r}") from None


def validate_config(cfg: dict, command: str) -> None:
    """Type and range checks that need no data; raises :class:`ConfigError`."""
    cfg["L"] = _int(cfg, "L", 0)
    cfg["threads"] = _int(cfg, "threads", 1)
    cfg["ranks"] = _int_list(cfg["ranks"], "ranks")
    if any(r < 0 for r in cfg["ranks"]):
        raise ConfigError("ranks", "must be non-negative")
    if cfg["deterministic"] not in ("none", "constant", "trend"):
        raise ConfigError("deterministic", "must be none, constant or trend")
    if not isinstance(cfg["scale"], bool):
        raise ConfigError("scale", "must be true or false")
    for k in ("warmup", "iterations", "seed", "thin"):
        cfg["chain"][k] = _int(cfg, f"chain.{k}", 0)
    cfg["chain"]["rho_sampling"] = bool(cfg["chain"]["rho_sampling"])
    cfg["analytics"]["horizon"] = _int(cfg, "analytics.horizon", 1)
    cfg["analytics"]["ppp_draws"] = _int(cfg, "analytics.ppp_draws", 1)
    cfg["analytics"]["rank_list"] = _int_list(cfg["analytics"]["rank_list"], "analytics.rank_list")
    cfg["analytics"]["lags"] = _int_list(cfg["analytics"]["lags"], "analytics.lags")
    if any(v < 0 for v in cfg["analytics"]["lags"]):
        raise ConfigError("analytics.lags", "must be non-negative")
    scen = cfg["study"]["scenarios"]
    if isinstance(scen, str):
        scen = [s for s in scen.replace(",", " ").split()]
    for s in scen:
        if SCENARIO_SYNONYMS.get(s, s) not in SCENARIO_LENGTHS:
            raise ConfigError("study.scenarios", f"unknown scenario {s!r}")
    cfg["study"]["scenarios"] = list(scen)
    if SCENARIO_SYNONYMS.get(cfg["simulate"]["scenario"], cfg["simulate"]["scenario"]) not in SCENARIO_LENGTHS:
        raise ConfigError("simulate.scenario", f"unknown scenario {cfg['simulate']['scenario']!r}")
    if cfg["simulate"]["T"] is not None:
        cfg["simulate"]["T"] = _int(cfg, "simulate.T", 2)
    build_chain_config(cfg)
    build_prior(cfg)
    if command in ("fit", "diagnose", "rank-profile", "criteria") and not cfg["input"]:
        raise ConfigError("input", "an input CSV is required")
    if command == "fevd" and not (cfg["input"] or cfg["chain_path"]):
        raise ConfigError("input", "fevd needs an input CSV or an existing chain")
    if not cfg["output"]:
        raise ConfigError("output", "an output directory is required")


def build_chain_config(cfg: dict) -> ChainConfig:
    c = cfg["chain"]
    try:
        return ChainConfig(
            warmup=c["warmup"], iterations=c["iterations"], seed=c["seed"], thin=c["thin"],
            rho_sampling=c["rho_sampling"], rho_proposal_sd=float(c["rho_proposal_sd"]),
            rho_init=float(c["rho_init"]),
        )
    except ConfigError as exc:
        raise ConfigError(f"chain.{exc.key}", str(exc).split(": ", 1)[-1]) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError("chain", str(exc)) from None


def build_prior(cfg: dict) -> PriorConfig:
    p = dict(cfg["prior"])
    sp = p.get("sigma_prior", "improper")
    if isinstance(sp, dict):
        if set(sp) != {"scale", "dof"}:
            raise ConfigError("prior.sigma_prior", "mapping must have keys scale and dof")
        scale = np.asarray(sp["scale"], dtype=float)
        sp = (scale, float(sp["dof"]))
    elif sp != "improper":
        raise ConfigError("prior.sigma_prior", "must be 'improper' or {scale, dof}")
    try:
        for key in ("mu_nu", "nu_nu", "mu_tau", "nu_tau", "v_diffuse"):
            p[key] = float(p[key])
    except (TypeError, ValueError):
        raise ConfigError(f"prior.{key}", f"must be a number, got {p[key]!r}") from None
    try:
        return PriorConfig(
            mu_nu=p["mu_nu"], nu_nu=p["nu_nu"], mu_tau=p["mu_tau"], nu_tau=p["nu_tau"],
            Hg=None if p["Hg"] is None else np.asarray(p["Hg"], dtype=float),
            v_diffuse=p["v_diffuse"], sigma_prior=sp, gamma_convention=p["gamma_convention"],
            alpha_prior=p["alpha_prior"],
        )
    except ConfigError as exc:
        raise ConfigError(f"prior.{exc.key}", str(exc).split(": ", 1)[-1]) from None
    except (TypeError, ValueError, NumericalError) as exc:
        raise ConfigError("prior.Hg", str(exc)) from None


def config_hash(cfg: dict) -> str:
    text = json.dumps(_jsonable(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# -- output handling -----------------------------------------------------


class OutputDir:
    """Stage files in a sibling temp directory, publish with a rename on success."""

    def __init__(self, target):
        self.target = Path(target).resolve()
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.stage = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.", dir=self.target.parent))

    def path(self, name: str) -> Path:
        return self.stage / name

    def write_json(self, name: str, obj) -> None:
        with open(self.path(name), "w") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def commit(self) -> Path:
        backup = None
        if self.target.exists():
            backup = self.target.with_name(f".{self.target.name}.old-{os.getpid()}")
            os.replace(self.target, backup)
        os.replace(self.stage, self.target)
        if backup is not None:
            shutil.rmtree(backup, ignore_errors=True)
        return self.target

    def abort(self) -> None:
        shutil.rmtree(self.stage, ignore_errors=True)


def manifest(command: str, cfg: dict, extra: dict) -> dict:
    return {
        "command": command,
        "seed": cfg["chain"]["seed"],
        "config": cfg,
        "config_hash": config_hash(cfg),
        "versions": {
            "panel_bvecm": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "pyyaml": yaml.__version__,
        },
        "scaling": extra.pop("scaling", None),
        **extra,
    }


# -- commands ------------------------------------------------------------


def _load_data(cfg: dict):
    try:
        data = ingest_csv(cfg["input"], cfg["deterministic"])
    except OSError as exc:
        raise DataError(f"cannot read input {cfg['input']}: {exc}") from exc
    scaling = None
    if cfg["scale"]:
        data, scaling = minmax_scale(data)
    return data, scaling


def _spec(data, cfg, L=None, ranks=None):
    ranks = cfg["ranks"] if ranks is None else ranks
    if len(ranks) == 1:
        ranks = ranks * data.N
    if len(ranks) != data.N:
        raise ConfigError("ranks", f"{len(ranks)} ranks for {data.N} individuals")
    for r in ranks:
        if r > data.n - 1:
            raise ConfigError("ranks", f"rank {r} exceeds n - 1 = {data.n - 1}")
    try:
        return data.spec(cfg["L"] if L is None else L, ranks)
    except (InsufficientData, DimensionMismatch) as exc:
        raise DataError(str(exc)) from exc


def _check_prior(prior: PriorConfig, spec):
    try:
        prior.validate(spec)
    except ConfigError as exc:
        raise ConfigError(f"prior.{exc.key}", str(exc).split(": ", 1)[-1]) from None
    if isinstance(prior.sigma_prior, str) and spec.T <= spec.Nn + 1:
        raise DofTooSmall(f"T={spec.T} usable rows must exceed Nn + 1 = {spec.Nn + 1}")


def _progress(event):
    logger.info("iteration %d  loglik %.3f", event["iteration"], event["loglik"])


def _fit(data, spec, cfg):
    prior = build_prior(cfg)
    _check_prior(prior, spec)
    return run_chain(data, spec, prior, build_chain_config(cfg), callback=_progress)


def _data_meta(data):
    return {
        "individuals": list(data.individuals), "variables": list(data.variables),
        "first_date": data.dates[0] if data.dates else None,
        "last_date": data.dates[-1] if data.dates else None, "T0": data.T0,
    }


def _write_summary(out: OutputDir, chain) -> None:
    write_rows_csv(out.path("summary.csv"), an.summarize(chain), SUMMARY_FIELDS)


def _get_chain(cfg, data, out: OutputDir):
    if cfg["chain_path"]:
        try:
            chain = ChainStore.load(cfg["chain_path"])
        except OSError as exc:
            raise DataError(f"cannot read chain {cfg['chain_path']}: {exc}") from exc
        if data is not None:
            spec = _spec(data, cfg)
            if spec != chain.spec:
                raise ConfigError("chain_path", "stored chain was fitted with different dimensions")
        return chain
    spec = _spec(data, cfg)
    chain = _fit(data, spec, cfg)
    chain.save(out.path("chain.npz"))
    return chain


def cmd_fit(cfg, out):
    data, scaling = _load_data(cfg)
    spec = _spec(data, cfg)
    chain = _fit(data, spec, cfg)
    chain.save(out.path("chain.npz"))
    _write_summary(out, chain)
    return {"scaling": scaling, "data": _data_meta(data),
            "spec": spec.__dict__, "rho_acceptance": chain.rho_acceptance}


def _truth(path):
    if path:
        try:
            return TruthFixture.load(path)
        except OSError as exc:
            raise DataError(f"cannot read truth {path}: {exc}") from exc
        except (KeyError, ValueError) as exc:
            raise DataError(f"invalid truth file {path}: {exc}") from exc
    return load_default_truth()


def cmd_simulate(cfg, out):
    s = cfg["simulate"]
    fixture = _truth(s["truth"])
    scen = Scenario.named(s["scenario"], fixture, s["seed"])
    if s["T"] is not None:
        scen.T = s["T"]
    data = simulate_panel(scen, np.random.default_rng(scen.seed))
    export_csv(data, out.path("data.csv"))
    fixture.save(out.path("truth.json"))
    return {"scenario": scen.name, "T": scen.T, "data": _data_meta(data)}


def cmd_study(cfg, out):
    st = cfg["study"]
    fixture = _truth(st["truth"])
    scenarios = [Scenario.named(name, fixture, st["seed"] * 1000 + idx)
                 for idx, name in enumerate(st["scenarios"])]
    prior = build_prior(cfg)
    result = run_study(scenarios, prior, build_chain_config(cfg), workers=cfg["threads"])
    rows = list(result.rows())
    write_rows_csv(out.path("study.csv"), rows, ("scenario", "group", "metric", "value"))
    out.write_json("study.json", result.to_json())
    if result.errors and not result.reports:
        raise ChainAbort("study", -1, "; ".join(f"{k}: {v}" for k, v in result.errors.items()))
    return {"scenarios": {s.name: {"T": s.T, "seed": s.seed} for s in scenarios},
            "errors": result.errors}


def cmd_fevd(cfg, out):
    data, scaling = _load_data(cfg) if cfg["input"] else (None, None)
    chain = _get_chain(cfg, data, out)
    H = cfg["analytics"]["horizon"]
    variables = list(data.variables) if data is not None else None
    individuals = list(data.individuals) if data is not None else None
    mean, lo, hi = an.posterior_fevd(chain, H, variables=variables)
    rows = []
    for (ind, h, var, shock, share), l, u in zip(mean.rows(individuals), lo.ravel(), hi.ravel()):
        rows.append({"individual": ind, "horizon": h, "variable": var, "shock": shock,
                     "share": share, "q2.5": float(l), "q97.5": float(u)})
    write_rows_csv(out.path("fevd.csv"), rows,
                   ("individual", "horizon", "variable", "shock", "share", "q2.5", "q97.5"))
    out.write_json("fevd.json", {"horizon": H, "ordering": variables, "rows": rows})
    _write_summary(out, chain)
    return {"scaling": scaling, "data": _data_meta(data) if data is not None else None}


def cmd_diagnose(cfg, out):
    data, scaling = _load_data(cfg)
    chain = _get_chain(cfg, data, out)
    rep = an.diagnostics(chain, data, chain.spec, np.random.default_rng(cfg["chain"]["seed"]),
                         ppp_draws=cfg["analytics"]["ppp_draws"])
    out.write_json("diagnostics.json", rep.to_dict())
    write_rows_csv(out.path("diagnostics.csv"),
                   [{"parameter": k, "ess": rep.ess[k], "mcse": rep.mcse[k]} for k in rep.ess],
                   ("parameter", "ess", "mcse"))
    _write_summary(out, chain)
    return {"scaling": scaling, "data": _data_meta(data), "ppp": rep.ppp}


def cmd_rank_profile(cfg, out):
    data, scaling = _load_data(cfg)
    for r in cfg["analytics"]["rank_list"]:
        if not 0 <= r <= data.n - 1:
            raise ConfigError("analytics.rank_list", f"rank {r} outside [0, {data.n - 1}]")
    prior = build_prior(cfg)
    for r in cfg["analytics"]["rank_list"]:
        _check_prior(prior, _spec(data, cfg, ranks=[r]))
    rows = an.rank_profile(data, cfg["L"], prior, build_chain_config(cfg), cfg["analytics"]["rank_list"])
    write_rows_csv(out.path("rank_profile.csv"), rows, ("rank", "mean_loglik", "error"))
    out.write_json("rank_profile.json", rows)
    return {"scaling": scaling, "data": _data_meta(data)}


def cmd_criteria(cfg, out):
    data, scaling = _load_data(cfg)
    prior = build_prior(cfg)
    cc = build_chain_config(cfg)
    lags = sorted(cfg["analytics"]["lags"])
    # compare lags on a common estimation sample: drop rows so every fit uses T0 - max(L) - 1
    rows = []
    for L in lags:
        trimmed = _trim(data, max(lags) - L)
        spec = _spec(trimmed, cfg, L=L)
        _check_prior(prior, spec)
        try:
            chain = run_chain(trimmed, spec, prior, cc)
            ic = an.information_criteria(chain, trimmed, spec)
            rows.append({"lags": L, **ic})
        except ChainAbort as exc:
            rows.append({"lags": L, "error": str(exc)})
    fields = ("lags", "dic", "waic", "bic", "aic", "p_d", "p_waic", "lppd", "loglik_at_mean",
              "n_params", "error")
    write_rows_csv(out.path("criteria.csv"), rows, fields)
    out.write_json("criteria.json", rows)
    return {"scaling": scaling, "data": _data_meta(data)}


def _trim(data, drop: int):
    if drop == 0:
        return data
    from .model import PanelData

    return PanelData(data.levels[:, drop:], data.deterministic[drop:], list(data.individuals),
                     list(data.variables), list(data.dates[drop:]))


HANDLERS = {
    "fit": cmd_fit, "simulate": cmd_simulate, "study": cmd_study, "fevd": cmd_fevd,
    "diagnose": cmd_diagnose, "rank-profile": cmd_rank_profile, "criteria": cmd_criteria,
}


# -- entry point ---------------------------------------------------------


def _int_or_list(text):
    return _int_list(text, "ranks")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="panel-bvecm", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML configuration file")
        s.add_argument("--input", help="long-format CSV (individual,date,variable,value)")
        s.add_argument("--output", help="output directory (replaced atomically)")
        s.add_argument("--chain", help="reuse a chain.npz from an earlier fit")
        s.add_argument("--deterministic", choices=("none", "constant", "trend"))
        s.add_argument("--L", type=int, help="number of lagged differences")
        s.add_argument("--ranks", type=_int_or_list, help="rank, or comma list per individual")
        s.add_argument("--scale", action="store_true", default=None,
                       help="min-max scale each series to [1, 100]")
        s.add_argument("--threads", type=int, help="BLAS threads and study workers")
        s.add_argument("--warmup", type=int)
        s.add_argument("--iterations", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--thin", type=int)
        s.add_argument("--rho-sampling", dest="rho_sampling", action="store_true", default=None)
        s.add_argument("--rho-proposal-sd", dest="rho_proposal_sd", type=float)
        s.add_argument("--horizon", type=int)
        s.add_argument("--rank-list", dest="rank_list", type=_int_or_list)
        s.add_argument("--lags", type=_int_or_list)
        s.add_argument("--scenario", help="simulate: short, moderate or large")
        s.add_argument("--scenarios", help="study: comma list of scenarios")
        s.add_argument("--T", type=int, help="simulate: override the sample length")
        s.add_argument("--truth", help="truth fixture JSON (simulate, study)")
        s.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key, e.g. prior.mu_nu=10")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, ImproperPrior)):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, InsufficientData, DimensionMismatch, OSError)):
        return EXIT_DATA
    if isinstance(exc, (NumericalError, ChainAbort, DofTooSmall)):
        return EXIT_NUMERIC
    return EXIT_OTHER


def _report(exc: BaseException, code: int) -> None:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ConfigError):
        err["key"] = exc.key
    if isinstance(exc, ChainAbort):
        err["step"], err["iteration"] = exc.step, exc.iteration
    print(json.dumps(err), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = None
    try:
        cfg = resolve_config(args)
        out = OutputDir(cfg["output"])
        extra = HANDLERS[args.command](cfg, out)
        out.write_json("manifest.json", manifest(args.command, cfg, extra))
        with open(out.path("config.yaml"), "w") as fh:
            yaml.safe_dump(_jsonable(cfg), fh, sort_keys=True)
        target = out.commit()
        out = None
        print(str(target))
        return EXIT_OK
    except Exception as exc:  # every failure maps onto the exit-code table
        code = exit_code_for(exc)
        if code == EXIT_OTHER:
            logger.exception("unexpected failure")
        _report(exc, code)
        return code
    finally:
        if out is not None:
            out.abort()


if __name__ == "__main__":
    sys.exit(main())
