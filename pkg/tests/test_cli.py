import json

import numpy as np
import pytest

from panel_bvecm.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from panel_bvecm.io import export_csv
from panel_bvecm.model import PanelData


@pytest.fixture
def panel_csv(tmp_path):
    rng = np.random.default_rng(8)
    T0 = 40
    common = np.cumsum(rng.standard_normal((2, T0, 1)), axis=1)
    levels = np.concatenate([common, common + 0.5 * rng.standard_normal((2, T0, 1))], axis=2)
    data = PanelData(levels, np.ones((T0, 1)), ["u1", "u2"], ["gdp", "cons"],
                     [f"{2000 + t // 12}-{t % 12 + 1:02d}-01" for t in range(T0)])
    path = tmp_path / "panel.csv"
    export_csv(data, path)
    return path


FAST = ["--warmup", "10", "--iterations", "40", "--seed", "3"]


def test_fit_writes_outputs(tmp_path, panel_csv, capsys):
    out = tmp_path / "fit"
    assert main(["fit", "--input", str(panel_csv), "--output", str(out), *FAST]) == EXIT_OK
    assert {"chain.npz", "summary.csv", "manifest.json", "config.yaml"} <= {p.name for p in out.iterdir()}
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and len(man["config_hash"]) == 64
    assert man["data"]["variables"] == ["gdp", "cons"]


def test_fit_is_reproducible(tmp_path, panel_csv):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["fit", "--input", str(panel_csv), "--output", str(a), *FAST])
    main(["fit", "--input", str(panel_csv), "--output", str(b), *FAST])
    assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()


def test_ragged_input_fails_without_output(tmp_path, panel_csv, capsys):
    lines = panel_csv.read_text().splitlines()
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines[:-2]) + "\n")
    out = tmp_path / "never"
    code = main(["fit", "--input", str(bad), "--output", str(out), *FAST])
    assert code == EXIT_DATA
    assert not out.exists()
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".never")]
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "RaggedPanel"


def test_failed_run_keeps_previous_output(tmp_path, panel_csv):
    out = tmp_path / "keep"
    main(["fit", "--input", str(panel_csv), "--output", str(out), *FAST])
    before = (out / "summary.csv").read_bytes()
    assert main(["fit", "--input", str(tmp_path / "nope.csv"), "--output", str(out), *FAST]) == EXIT_DATA
    assert (out / "summary.csv").read_bytes() == before


def test_config_error_names_key(tmp_path, panel_csv, capsys):
    code = main(["fit", "--input", str(panel_csv), "--output", str(tmp_path / "o"),
                 "--set", "prior.nu_nu=1", *FAST])
    assert code == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["key"].startswith("prior")
    code = main(["fit", "--input", str(panel_csv), "--output", str(tmp_path / "o"),
                 "--set", "chain.bogus=1"])
    assert code == EXIT_CONFIG
    code = main(["fit", "--input", str(panel_csv), "--output", str(tmp_path / "o"), "--ranks", "2"])
    assert code == EXIT_CONFIG


def test_yaml_config_and_env(tmp_path, panel_csv, monkeypatch):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(f"input: {panel_csv}\nchain:\n  warmup: 5\n  iterations: 12\n  seed: 9\n")
    monkeypatch.setenv("PANEL_BVECM_OUTPUT", str(tmp_path / "env_out"))
    assert main(["fit", "--config", str(cfg)]) == EXIT_OK
    man = json.loads((tmp_path / "env_out" / "manifest.json").read_text())
    assert man["config"]["chain"]["iterations"] == 12 and man["seed"] == 9
    # flags beat the environment
    assert main(["fit", "--config", str(cfg), "--output", str(tmp_path / "flag_out")]) == EXIT_OK
    assert (tmp_path / "flag_out" / "manifest.json").exists()


def test_analytics_commands(tmp_path, panel_csv):
    base = ["--input", str(panel_csv), *FAST]
    fit = tmp_path / "fit"
    assert main(["fit", "--output", str(fit), *base]) == EXIT_OK
    assert main(["fevd", "--chain", str(fit / "chain.npz"), "--input", str(panel_csv),
                 "--output", str(tmp_path / "fevd"), "--horizon", "4"]) == EXIT_OK
    rows = json.loads((tmp_path / "fevd" / "fevd.json").read_text())["rows"]
    assert len(rows) == 2 * 4 * 2 * 2
    assert main(["diagnose", "--output", str(tmp_path / "diag"), *base]) == EXIT_OK
    d = json.loads((tmp_path / "diag" / "diagnostics.json").read_text())
    assert 0 <= d["ppp"] <= 1
    assert main(["rank-profile", "--output", str(tmp_path / "rp"), "--rank-list", "0,1", *base]) == EXIT_OK
    assert [r["rank"] for r in json.loads((tmp_path / "rp" / "rank_profile.json").read_text())] == [0, 1]
    assert main(["criteria", "--output", str(tmp_path / "cr"), "--lags", "1,2", *base]) == EXIT_OK
    assert len(json.loads((tmp_path / "cr" / "criteria.json").read_text())) == 2


def test_simulate_command(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--output", str(out), "--scenario", "short", "--seed", "1"]) == EXIT_OK
    lines = (out / "data.csv").read_text().splitlines()
    assert lines[0] == "individual,date,variable,value"
    assert len(lines) - 1 == 3 * 32 * 4


def test_study_command_small(tmp_path):
    out = tmp_path / "study"
    assert main(["study", "--output", str(out), "--scenarios", "short",
                 "--warmup", "10", "--iterations", "30"]) == EXIT_OK
    rows = json.loads((out / "study.json").read_text())["rows"]
    assert {r["group"] for r in rows} == {"Gamma", "Pi"} and len(rows) == 10
