import json
import math

import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from nsflab.checkpoint import (CheckpointError, decode_checkpoint, encode_checkpoint,
                               read_checkpoint, write_checkpoint)
from nsflab.cli import main
from nsflab.core import FluidParams, FluidState
from nsflab.functionals import DiagnosticsRecord, LyapunovWeights, diagnose, random_bump_state
from nsflab.grid import Grid
from nsflab.io import (ConfigError, RunManifest, dumps_json, load_yaml, read_csv,
                       read_diagnostics_csv, records_to_csv, sha256_file, table_to_csv,
                       verify_manifest, write_atomic, write_report)
from nsflab.plotting import plot_script, render_curves

SMALL = {"kind": "small_perturbation", "dim": 2, "n": 16, "L": 8.0, "t_end": 1.0,
         "sample_dt": 0.25, "seed": 2, "weights": {"A4": 2.0},
         "bumps": [{"type": "bump", "field": "a", "amplitude": 0.05},
                   {"type": "bump", "field": "u0", "amplitude": 0.05}]}


def some_state(dim=2, n=16):
    g = Grid(dim, n, 8.0)
    return random_bump_state(g, np.random.default_rng(0), 0.1, (1.0, 3.0))


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return path


# --- checkpoints ----------------------------------------------------------------------

@pytest.mark.parametrize("dim,n", [(1, 16), (2, 8), (3, 8)])
def test_checkpoint_round_trip_is_bitwise(tmp_path, dim, n):
    s = some_state(dim, n)
    s.time = 1.25
    digest = write_checkpoint(tmp_path / "c.nsf", s, FluidParams(mu=0.5, lam=0.1))
    assert digest == sha256_file(tmp_path / "c.nsf")
    back, mu, lam = read_checkpoint(tmp_path / "c.nsf")
    assert (mu, lam, back.time) == (0.5, 0.1, 1.25)
    for a, b in ((s.rho, back.rho), (s.u, back.u), (s.temp, back.temp)):
        assert a.tobytes() == b.tobytes()


def test_checkpoint_header_layout():
    blob = encode_checkpoint(FluidState.equilibrium(Grid(1, 8, 2.0)), FluidParams())
    assert blob[:4] == b"NSF1"
    assert int.from_bytes(blob[4:8], "little") == 1
    assert len(blob) == 56 + 8 * 3 * 8


@pytest.mark.parametrize("corrupt,match", [
    (lambda b: b"XSF1" + b[4:], "magic"),
    (lambda b: b[:4] + (2).to_bytes(4, "little") + b[8:], "version"),
    (lambda b: b[:-8], "length"),
    (lambda b: b[:20], "truncated"),
    (lambda b: b + b"\0" * 8, "length"),
])
def test_corrupt_checkpoints_are_rejected(corrupt, match):
    blob = encode_checkpoint(some_state(), FluidParams())
    with pytest.raises(CheckpointError, match=match):
        decode_checkpoint(corrupt(blob))


# --- CSV / JSON --------------------------------------------------------------------------

@settings(max_examples=25)
@given(rows=st.lists(st.lists(st.floats(allow_nan=False), min_size=3, max_size=3),
                     min_size=1, max_size=10))
def test_csv_round_trip_exact(rows):
    cols = read_csv(table_to_csv(["a", "b", "c"], rows, comment="test"))
    np.testing.assert_array_equal(np.column_stack([cols["a"], cols["b"], cols["c"]]),
                                  np.array(rows))


def test_diagnostics_csv_schema(tmp_path):
    rec = diagnose(some_state(), FluidParams(), LyapunovWeights())
    path = tmp_path / "d.csv"
    write_atomic(path, records_to_csv([rec, rec]))
    assert path.read_text().startswith("# nsflab diagnostics schema")
    cols = read_diagnostics_csv(path)
    assert list(cols) == DiagnosticsRecord.columns()
    assert cols["X_value"][1] == rec.X_value
    path.write_text("time,x\n0,1\n")
    with pytest.raises(ValueError, match="schema"):
        read_diagnostics_csv(path)


def test_json_is_canonical_and_validated(tmp_path):
    text = dumps_json({"b": np.float64(1.5), "a": [np.int64(2), float("nan")]})
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [2, None], "b": 1.5}
    with pytest.raises(Exception):
        write_report(tmp_path / "r.json", {"command": "simulate"})


def test_manifest_detects_tampering(tmp_path):
    out = {"x.txt": write_atomic(tmp_path / "x.txt", "hello")}
    RunManifest("fit", {}, {}, outputs=out).write(tmp_path / "manifest.json")
    assert verify_manifest(tmp_path / "manifest.json") == []
    (tmp_path / "x.txt").write_text("changed")
    assert verify_manifest(tmp_path / "manifest.json") == ["x.txt"]


def test_load_yaml_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_yaml(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="mapping"):
        load_yaml(bad)


def test_plot_outputs(tmp_path):
    t = np.linspace(0, 10, 11)
    digest = render_curves(tmp_path / "p.png", t, {"y": (1 + t) ** -0.5}, title="decay")
    assert (tmp_path / "p.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert len(digest) == 64
    script = plot_script("d.csv", "p.png", "plot.py", ["y"], title="decay")
    compile(script, "plot.py", "exec")


# --- CLI ----------------------------------------------------------------------------------

def test_cli_simulate_writes_artifacts(tmp_path, config):
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(config), "--out", str(out)]) == 0
    for name in ("diagnostics.csv", "monitor.csv", "final.nsf", "summary.json", "decay.png",
                 "plot_decay.py", "manifest.json"):
        assert (out / name).exists(), name
    assert verify_manifest(out / "manifest.json") == []
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "ok" and summary["samples"] == 5
    state, _, _ = read_checkpoint(out / "final.nsf")
    assert state.time == pytest.approx(1.0)


def test_cli_manifest_replay_reproduces_outputs(tmp_path, config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(config), "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    for name in ("diagnostics.csv", "final.nsf", "summary.json"):
        assert sha256_file(a / name) == sha256_file(b / name)


def test_cli_output_dir_from_environment(tmp_path, config, monkeypatch):
    monkeypatch.setenv("NSFLAB_OUT", str(tmp_path / "env"))
    assert main(["diagnose", "--config", str(config)]) == 0
    report = json.loads((tmp_path / "env" / "diagnose.json").read_text())
    assert report["command"] == "diagnose"


def test_cli_diagnose_checkpoint(tmp_path, config):
    main(["simulate", "--config", str(config), "--out", str(tmp_path)])
    out = tmp_path / "diag"
    assert main(["diagnose", "--checkpoint", str(tmp_path / "final.nsf"), "--out", str(out)]) == 0
    cols = read_diagnostics_csv(out / "diagnostics.csv")
    assert cols["time"][0] == pytest.approx(1.0)


def test_cli_fit_bundled_series(tmp_path):
    assert main(["fit", "--out", str(tmp_path)]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())["fit"]
    assert fit["exponent"] == pytest.approx(-0.75, abs=1e-10)


@pytest.mark.parametrize("cfg,code", [
    ({**SMALL, "unknown_key": 1}, 2),
    ({k: v for k, v in SMALL.items() if k != "L"}, 2),
    ({**SMALL, "lambda": 3.0}, 2),  # rejected only with --strict-regime
])
def test_cli_config_errors(tmp_path, cfg, code):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(cfg))
    args = ["simulate", "--config", str(path), "--out", str(tmp_path / "o"), "--strict-regime"]
    assert main(args) == code


def test_cli_missing_config(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_numerical_abort(tmp_path):
    cfg = {"kind": "small_perturbation", "dim": 1, "n": 32, "L": 2 * math.pi, "t_end": 2.0,
           "sample_dt": 1.0, "dt": 1.0, "weights": {}, "project_means": False,
           "bumps": [{"type": "mode", "field": "u0", "amplitude": 3.0, "wavevector": [1],
                      "phase": -math.pi / 2}]}
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 3
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["status"] == "aborted"


def test_cli_fit_bad_column(tmp_path):
    assert main(["fit", "--column", "nope", "--out", str(tmp_path)]) == 2


def test_cli_selftest_subset(tmp_path, capsys):
    assert main(["selftest", "--only", "7", "--out", str(tmp_path)]) == 0
    assert "[PASS] criterion 7" in capsys.readouterr().out
