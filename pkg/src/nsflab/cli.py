"""Command-line entry point: ``nsflab {simulate,diagnose,twin,fit,selftest}``.

Exit status: 0 success, 2 configuration error, 3 numerical abort,
4 failed assertion (selftest or ``--strict`` checks).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import read_checkpoint, write_checkpoint
from .core import FluidParams, NumericalAbort
from .experiments import (MONITOR_COLUMNS, Scenario, ScenarioError, build_initial_state,
                          simulate_scenario, twin_stability_run)
from .freq import decay_bootstrap_report, fit_decay
from .functionals import (DiagnosticsRecord, LyapunovWeights, SCHEMA_VERSION, diagnose,
                          elliptic_flux_residual, energy_identity_residual,
                          energy_identity_terms, norm_suite, velocity_control_check)
from .grid import set_workers
from .io import (ConfigError, RunManifest, load_yaml, read_csv, records_to_csv, table_to_csv,
                 write_atomic, write_report)
from .plotting import plot_script, render_curves

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_ASSERT = 0, 2, 3, 4
OUT_ENV = "NSFLAB_OUT"
log = logging.getLogger("nsflab")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="nsflab",
        description="Pseudo-spectral compressible Navier-Stokes-Fourier experiments.",
        epilog=f"Output directory: --out, else ${OUT_ENV}, else ./nsflab_out. "
               "Exit codes: 0 ok, 2 config error, 3 numerical abort, 4 assertion failure.")
    p.add_argument("--version", action="version", version=f"nsflab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario YAML file, or a run manifest to replay")
    common.add_argument("--out", help=f"output directory (overrides ${OUT_ENV})")
    common.add_argument("--seed", type=int, help="override the scenario seed")
    common.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    common.add_argument("--strict-regime", action="store_true",
                        help="reject parameters with mu <= lambda/2")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run a scenario and write diagnostics")
    d = sub.add_parser("diagnose", parents=[common],
                       help="evaluate every functional on an initial state or checkpoint")
    d.add_argument("--checkpoint", help="checkpoint file to diagnose instead of the scenario data")
    sub.add_parser("twin", parents=[common], help="twin-run stability experiment")
    f = sub.add_parser("fit", parents=[common], help="fit a decay exponent to a CSV series")
    f.add_argument("--input", help="CSV with a time column (default: bundled synthetic series)")
    f.add_argument("--column", default=None, help="column to fit (default: first non-time)")
    f.add_argument("--window", type=float, nargs=2, metavar=("T_A", "T_B"))
    s = sub.add_parser("selftest", parents=[common], help="run the acceptance checks")
    s.add_argument("--only", type=int, nargs="*", help="run only these criterion numbers")
    return p


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUT_ENV) or "nsflab_out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_scenario(args):
    """Scenario plus explicit weights when replaying a manifest."""
    if not args.config:
        raise ConfigError("--config is required for this command")
    data = load_yaml(args.config)
    weights = None
    if "scenario" in data and "resolved" in data:
        weights = LyapunovWeights(**data["resolved"]["weights"])
        data = data["scenario"]
    try:
        scenario = Scenario.from_dict(dict(data))
    except ScenarioError as exc:
        raise ConfigError(str(exc)) from None
    if args.seed is not None:
        scenario.seed = int(args.seed)
    if args.strict_regime and not scenario.params().theorem_regime:
        raise ConfigError(f"mu={scenario.mu} <= lambda/2={scenario.lam / 2} rejected by --strict-regime")
    return scenario, weights


def _finish(out: Path, command: str, scenario: dict, resolved: dict, outputs: dict,
            steps: int, started: float) -> None:
    RunManifest(command, scenario, resolved, steps, time.time() - started, outputs).write(
        out / "manifest.json")


def cmd_simulate(args) -> int:
    started = time.time()
    scenario, weights = load_scenario(args)
    out = _out_dir(args)
    res = simulate_scenario(scenario, weights)
    traj = res.trajectory
    outputs = {}
    outputs["diagnostics.csv"] = write_atomic(out / "diagnostics.csv", records_to_csv(traj.records))
    outputs["monitor.csv"] = write_atomic(out / "monitor.csv",
                                          table_to_csv(MONITOR_COLUMNS, traj.monitor))
    outputs["final.nsf"] = write_checkpoint(out / "final.nsf", traj.last_good, res.params)
    summary = {
        "schema_version": SCHEMA_VERSION, "command": "simulate",
        "status": "aborted" if traj.aborted else "ok", "abort_message": traj.abort_message,
        "scenario": scenario.name or scenario.kind, "samples": len(traj.records),
        "steps": traj.steps, "initial": res.initial_info, "monitor": res.monitor,
        "fits": res.fits, "weights": res.weights.to_dict(),
    }
    if len(traj.records) >= 3:
        e = traj.column("energy")
        if np.max(np.abs(traj.column("dissipation"))) > 0 or np.ptp(e) > 0:
            summary["energy_identity_residual"] = energy_identity_residual(
                traj.column("time"), e, traj.column("dissipation"))
        cols = {c: traj.column(c) for c in DiagnosticsRecord.columns()}
        summary["bootstrap"] = decay_bootstrap_report(cols, scenario.dim, res.fits["window"])
    outputs["summary.json"] = write_report(out / "summary.json", summary)
    if traj.records and scenario.kind != "equilibrium":
        channels = ["state_L2", "state_H1", "X_value", "low_freq_energy"]
        t = traj.column("time")
        outputs["decay.png"] = render_curves(out / "decay.png", t,
                                             {c: traj.column(c) for c in channels},
                                             title=f"{scenario.kind} decay channels")
        outputs["plot_decay.py"] = write_atomic(
            out / "plot_decay.py",
            plot_script("diagnostics.csv", "decay.png", "plot_decay.py", channels,
                        title=f"{scenario.kind} decay channels"))
    _finish(out, "simulate", scenario.to_dict(), res.resolved(), outputs, traj.steps, started)
    if traj.aborted:
        log.error("numerical abort: %s", traj.abort_message)
        return EXIT_ABORT
    return EXIT_OK


def cmd_diagnose(args) -> int:
    started = time.time()
    out = _out_dir(args)
    if args.checkpoint:
        state, mu, lam = read_checkpoint(args.checkpoint)
        params = FluidParams(mu=mu, lam=lam)
        scenario_echo = {"checkpoint": str(args.checkpoint)}
        weights = LyapunovWeights()
        if args.config:
            scenario, w = load_scenario(args)
            from .experiments import resolve_weights
            weights = w or resolve_weights(scenario, params)
    else:
        scenario, w = load_scenario(args)
        from .experiments import resolve_weights
        params = scenario.params()
        state, _ = build_initial_state(scenario)
        weights = w or resolve_weights(scenario, params)
        scenario_echo = scenario.to_dict()
    rec = diagnose(state, params, weights)
    res_G, res_c = elliptic_flux_residual(state, params)
    report = {
        "schema_version": SCHEMA_VERSION, "command": "diagnose", "status": "ok",
        "time": state.time, "norms": norm_suite(state),
        "energy": energy_identity_terms(state, params).__dict__,
        "elliptic_residuals": {"G": res_G, "curl": res_c},
        "velocity_control": velocity_control_check(state, params),
        "weights": weights.to_dict(),
    }
    outputs = {"diagnostics.csv": write_atomic(out / "diagnostics.csv", records_to_csv([rec])),
               "diagnose.json": write_report(out / "diagnose.json", report)}
    _finish(out, "diagnose", scenario_echo, {"params": params.to_dict(),
                                             "weights": weights.to_dict()}, outputs, 0, started)
    return EXIT_OK


def cmd_twin(args) -> int:
    started = time.time()
    scenario, _ = load_scenario(args)
    out = _out_dir(args)
    report = twin_stability_run(scenario)
    report.update({"schema_version": SCHEMA_VERSION, "command": "twin"})
    outputs = {}
    times = report.get("times", [])
    if report["runs"]:
        cols = ["time"] + [f"distance_eps_{r['epsilon']:g}" for r in report["runs"]]
        rows = [[t] + [r["distance"][i] if i < len(r["distance"]) else float("nan")
                       for r in report["runs"]] for i, t in enumerate(times)]
        outputs["twin_distance.csv"] = write_atomic(out / "twin_distance.csv",
                                                    table_to_csv(cols, rows))
        pos = [r for r in report["runs"] if r["epsilon"] > 0]
        curves = {f"eps={r['epsilon']:g}": np.asarray(r["distance"]) / r["epsilon"] for r in pos}
        refs = {f"envelope/eps, eps={r['epsilon']:g}": np.asarray(r["envelope"]) / r["epsilon"]
                for r in pos}
        if pos:
            outputs["twin_distance.png"] = render_curves(
                out / "twin_distance.png", times, curves, reference=refs,
                title="H^s distance / eps against the envelope shape")
            outputs["plot_twin.py"] = write_atomic(out / "plot_twin.py", plot_script(
                "twin_distance.csv", "twin_distance.png", "plot_twin.py", cols[1:],
                title="twin distance"))
    outputs["twin.json"] = write_report(out / "twin.json", report)
    _finish(out, "twin", scenario.to_dict(), {"params": scenario.params().to_dict(),
                                              "dt": report.get("dt")}, outputs, 0, started)
    if report["status"] != "ok":
        return EXIT_ABORT
    return EXIT_OK


def bundled_series_path():
    return resources.files("nsflab") / "data" / "synthetic_decay.csv"


def cmd_fit(args) -> int:
    started = time.time()
    out = _out_dir(args)
    source = Path(args.input) if args.input else bundled_series_path()
    try:
        cols = read_csv(source.read_text(encoding="utf-8"))
    except (OSError, ValueError, StopIteration) as exc:
        raise ConfigError(f"cannot read series {source}: {exc}") from None
    if "time" not in cols:
        raise ConfigError("series needs a 'time' column")
    column = args.column or next((c for c in cols if c != "time"), None)
    if column not in cols:
        raise ConfigError(f"column {column!r} not in series")
    try:
        fit = fit_decay(cols["time"], cols[column], args.window, column)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report = {"schema_version": SCHEMA_VERSION, "command": "fit",
              "status": "poor fit" if fit.poor_fit else "ok", "source": source.name,
              "fit": fit.to_dict()}
    outputs = {"fit.json": write_report(out / "fit.json", report)}
    _finish(out, "fit", {"input": source.name, "column": column},
            {"window": [fit.t_a, fit.t_b]}, outputs, 0, started)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .acceptance import run_all

    out = _out_dir(args)
    results = run_all(only=args.only)
    for r in results:
        print(r.line())
    report = {"schema_version": SCHEMA_VERSION, "command": "selftest",
              "status": "pass" if all(r.passed for r in results) else "fail",
              "results": [r.to_dict() for r in results]}
    write_report(out / "selftest.json", report)
    return EXIT_OK if report["status"] == "pass" else EXIT_ASSERT


COMMANDS = {"simulate": cmd_simulate, "diagnose": cmd_diagnose, "twin": cmd_twin,
            "fit": cmd_fit, "selftest": cmd_selftest}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        set_workers(args.threads)
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except AssertionError as exc:
        print(f"assertion failure: {exc}", file=sys.stderr)
        return EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
