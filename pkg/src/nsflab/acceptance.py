"""Acceptance checks shared by ``nsflab selftest`` and the test suite.

Each ``check_N`` returns a :class:`CheckResult` carrying the measured values,
the threshold and a one-line verdict.
"""
from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import FluidState, max_wave_speed
from .experiments import (Scenario, build_initial_state, run_trajectory, simulate_scenario,
                          twin_stability_run)
from .freq import FreqSplitConfig, default_window, fit_decay, low_freq_energy, parseval_energy
from .functionals import (LyapunovWeights, elliptic_flux_residual, energy_identity_residual,
                          energy_identity_terms, interpolation_ratio, l2, lyapunov_X,
                          random_bump_state)
from .grid import Grid, lp_decompose, periodic_gaussian, spectral_gradient

# Calibrated on seeds 0..99 (max ratio 0.633) and pinned at ~1.25x; asserted on seeds 1000..1099.
HOLDER_INTERPOLATION_C = 0.80
HOLDER_CALIBRATION_SEEDS = range(0, 100)
HOLDER_CHECK_SEEDS = range(1000, 1100)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    summary: str
    values: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number} ({self.name}): {self.summary}"

    def to_dict(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "summary": self.summary, "values": self.values}


# --- scenarios -------------------------------------------------------------------------

def energy_scenario(dt: float) -> Scenario:
    return Scenario.from_dict(dict(
        kind="small_perturbation", dim=2, n=128, L=32.0, t_end=5.0, sample_dt=dt, dt=dt,
        bumps=[dict(type="bump", field="a", amplitude=0.05, center=[16, 16], width=3.0),
               dict(type="bump", field="theta", amplitude=0.05, center=[15, 17], width=3.5),
               dict(type="bump", field="u0", amplitude=0.05, center=[17, 15], width=3.0)]))


def decay_scenario_2d() -> Scenario:
    return Scenario.from_dict(dict(
        kind="small_perturbation", name="decay-2d", dim=2, n=256, L=100.0, t_end=36.0,
        sample_dt=0.5,
        bumps=[dict(type="bump", field="a", amplitude=0.05, center=[50, 50], width=2.0),
               dict(type="bump", field="theta", amplitude=0.05, center=[48, 51], width=2.4),
               dict(type="bump", field="u0", amplitude=0.05, center=[52, 49], width=2.0),
               dict(type="bump", field="u1", amplitude=-0.05, center=[49, 52], width=2.0)]))


def decay_scenario_3d() -> Scenario:
    return Scenario.from_dict(dict(
        kind="small_perturbation", name="decay-3d", dim=3, n=64, L=32.0, t_end=11.5,
        sample_dt=0.5,
        bumps=[dict(type="bump", field="a", amplitude=0.05, center=[16, 16, 16], width=2.0),
               dict(type="bump", field="theta", amplitude=0.05, center=[15, 16.5, 17], width=2.4),
               dict(type="bump", field="u0", amplitude=0.05, center=[17, 15, 16], width=2.0),
               dict(type="bump", field="u1", amplitude=-0.05, center=[16, 17, 15], width=2.0)]))


def twin_scenario() -> Scenario:
    """Unstable double shear layer of amplitude 0.2 at low viscosity, so that
    nearby trajectories separate exponentially."""
    return Scenario.from_dict(dict(
        kind="twin_stability", name="twin-shear", dim=2, n=64, L=2 * math.pi, mu=0.001,
        t_end=90.0, sample_dt=1.0, seed=1, epsilon=[0.0, 1e-2, 1e-3, 1e-4],
        bumps=[dict(type="shear", field="u0", amplitude=0.2, width=0.25)]))


def heat_scenario(dim: int) -> Scenario:
    # width sqrt(2) makes the whole-space L2 norm an exact power of (1 + t)
    n = {1: 512, 2: 256}[dim]
    return Scenario.from_dict(dict(
        kind="heat_only", dim=dim, n=n, L=200.0, t_end=72.0, sample_dt=0.5, project_means=False,
        bumps=[dict(type="bump", field="theta", amplitude=0.05, center=[100.0] * dim,
                    width=math.sqrt(2.0))]))


@lru_cache(maxsize=None)
def decay_run(dim: int):
    return simulate_scenario(decay_scenario_2d() if dim == 2 else decay_scenario_3d())


@lru_cache(maxsize=None)
def twin_report():
    return twin_stability_run(twin_scenario())


# --- criteria ------------------------------------------------------------------------------

def _energy_residual(dt: float) -> float:
    sc = energy_scenario(dt)
    state0, _ = build_initial_state(sc)
    params = sc.params()
    t, e, d = [], [], []

    def record(s):
        led = energy_identity_terms(s, params)
        t.append(s.time)
        e.append(led.energy)
        d.append(led.dissipation)

    traj = run_trajectory(state0, params, sc.t_end, sc.sample_dt, dt=dt, diagnostics=False,
                          callback=record)
    if traj.aborted:
        return float("inf")
    return energy_identity_residual(t, e, d)


def check_1() -> CheckResult:
    r1 = _energy_residual(0.05)
    r2 = _energy_residual(0.025)
    ratio = r1 / r2
    ok = r1 < 1e-3 and ratio >= 3.0
    return CheckResult(1, "energy identity", ok,
                       f"residual {r1:.3e} (< 1e-3), halving dt -> {r2:.3e}, ratio {ratio:.2f} (>= 3)",
                       {"residual": r1, "residual_half_dt": r2, "ratio": ratio})


def _elliptic_max(dim: int, n: int, seeds=range(5)) -> tuple:
    from .core import FluidParams

    L = 2 * math.pi
    g = Grid(dim, n, L)
    widths = (L / 16, L / 8) if dim == 2 else (L / 8, L / 5)
    params = FluidParams(mu=1.0, lam=0.5)
    worst = [0.0, 0.0]
    for s in seeds:
        st = random_bump_state(g, np.random.default_rng(s), 0.1, widths)
        res = elliptic_flux_residual(st, params)
        worst = [max(worst[0], res[0]), max(worst[1], res[1])]
    return tuple(worst)


def check_2() -> CheckResult:
    fine2, coarse2 = _elliptic_max(2, 64), _elliptic_max(2, 32)
    fine3, coarse3 = _elliptic_max(3, 32), _elliptic_max(3, 16)
    below = max(fine2 + fine3) < 1e-6
    refine = all(f < c for f, c in zip(fine2 + fine3, coarse2 + coarse3))
    return CheckResult(2, "effective-flux elliptic identities", below and refine,
                       f"max residual 64^2 {max(fine2):.2e}, 32^3 {max(fine3):.2e} (< 1e-6); "
                       f"coarser grids {max(coarse2):.2e}, {max(coarse3):.2e} (decreasing: {refine})",
                       {"2d": fine2, "2d_coarse": coarse2, "3d": fine3, "3d_coarse": coarse3})


def heat_decay(dim: int) -> dict:
    sc = heat_scenario(dim)
    state0, _ = build_initial_state(sc)
    params = sc.params()
    g = state0.grid
    t, norms = [], []
    traj = run_trajectory(state0, params, sc.t_end, sc.sample_dt, diagnostics=False,
                          callback=lambda s: (t.append(s.time), norms.append(l2(s.theta, g))))
    window = default_window(sc.L, max_wave_speed(state0))
    fit = fit_decay(t, norms, window, "theta_L2")
    # closed-form heat solution at the final time
    w0 = math.sqrt(2.0)
    T = traj.final_state.time
    w = math.sqrt(w0 ** 2 + 2.0 * T)
    exact = 0.05 * (w0 / w) ** dim * periodic_gaussian(g, [100.0] * dim, w)
    oracle_err = l2(traj.final_state.theta - g.dealias(exact), g) / l2(exact, g)
    return {"exponent": fit.exponent, "window": window, "oracle_rel_error": oracle_err,
            "rms": fit.rms_residual}


def check_3() -> CheckResult:
    h1, h2 = heat_decay(1), heat_decay(2)
    ok = (abs(h1["exponent"] + 0.25) <= 0.05 and abs(h2["exponent"] + 0.5) <= 0.05
          and h1["oracle_rel_error"] < 1e-6 and h2["oracle_rel_error"] < 1e-6)
    return CheckResult(3, "heat-kernel decay", ok,
                       f"1D exponent {h1['exponent']:.4f} (-0.25 +- 0.05), 2D {h2['exponent']:.4f} "
                       f"(-0.5 +- 0.05); Gaussian oracle error {max(h1['oracle_rel_error'], h2['oracle_rel_error']):.1e}",
                       {"1d": h1, "2d": h2})


def check_4() -> CheckResult:
    r2, r3 = decay_run(2), decay_run(3)
    fit2 = r2.fits["fits"]["state_L2"]
    fit3 = r3.fits["fits"]["state_H1"]
    h1 = r3.trajectory.column("state_H1")
    mono = bool(np.all(np.diff(h1) <= 0))
    ok = (not r2.trajectory.aborted and not r3.trajectory.aborted
          and abs(fit2["exponent"] + 0.5) <= 0.2 and mono and -1.2 <= fit3["exponent"] <= -0.4)
    return CheckResult(4, "NSF decay surrogate", ok,
                       f"2D L2 exponent {fit2['exponent']:.3f} (-0.5 +- 0.2) on "
                       f"[{fit2['t_a']:.2f}, {fit2['t_b']:.2f}]; 3D H1 exponent {fit3['exponent']:.3f} "
                       f"(in [-1.2, -0.4]), monotone {mono}",
                       {"2d": fit2, "3d": fit3, "3d_monotone": mono})


def check_5() -> CheckResult:
    vals = {}
    ok = True
    for dim in (2, 3):
        r = decay_run(dim)
        m = r.monitor
        vals[f"{dim}d"] = {"min_rho_ratio": m["min_rho_ratio"], "min_temp_ratio": m["min_temp_ratio"],
                           "aborted": r.trajectory.aborted}
        ok &= m["min_rho_ratio"] >= 0.5 and m["min_temp_ratio"] >= 0.5 and not r.trajectory.aborted
    worst = min(min(v["min_rho_ratio"], v["min_temp_ratio"]) for v in vals.values())
    return CheckResult(5, "lower-bound propagation", ok,
                       f"min over runs of min(rho, T)(t) / initial minimum = {worst:.4f} (>= 0.5), no abort",
                       vals)


def check_6() -> CheckResult:
    r = decay_run(2)
    X = r.trajectory.column("X_value")
    ratio = r.trajectory.column("X_ratio")
    tol = 1e-3
    rise = float(np.max(np.diff(X) / X[1:]))
    eq = FluidState.equilibrium(Grid(2, 32, 10.0))
    from .core import FluidParams
    x_eq = lyapunov_X(eq, FluidParams(), r.weights).value
    lo, hi = r.weights.ratio_lo, r.weights.ratio_hi
    inside = bool(ratio.min() >= lo and ratio.max() <= hi)
    ok = rise <= tol and x_eq == 0.0 and inside and hi / lo <= 10.0
    return CheckResult(6, "Lyapunov functional", ok,
                       f"max relative rise of X {rise:.2e} (<= {tol:g}); X(equilibrium) = {x_eq}; "
                       f"ratio range [{ratio.min():.3f}, {ratio.max():.3f}] within validated "
                       f"[{lo:.3f}, {hi:.3f}] (spread {hi / lo:.2f} <= 10); A4 = {r.weights.A4:g}",
                       {"max_rise": rise, "x_equilibrium": x_eq, "ratio_min": float(ratio.min()),
                        "ratio_max": float(ratio.max()), "validated": [lo, hi],
                        "weights": r.weights.to_dict()})


def check_7() -> CheckResult:
    g = Grid(2, 64, 20.0)
    st = random_bump_state(g, np.random.default_rng(7), 0.1, (1.0, 4.0))
    full = FreqSplitConfig(ball_constant=2.0 * g.k_max)
    lf = low_freq_energy(st, 0.0, full).value
    pe = parseval_energy(st)
    parseval_err = abs(lf - pe) / pe
    # single mode a = eps cos(k.x), k = (3, 4) lattice modes -> |xi| = 5 k_min
    eps = 1e-3
    x = g.coords
    k0 = 2 * math.pi / g.box_length * np.array([3.0, 4.0])
    a = eps * np.cos(np.tensordot(k0, x, axes=1))
    single = FluidState(g, 1.0 + a, np.zeros((2,) + g.shape), np.ones(g.shape))
    cfg = FreqSplitConfig(ball_constant=7.3 * g.k_min)
    xi0 = float(np.linalg.norm(k0))
    t_star = cfg.exit_time(xi0)
    eta = 1e-9 * (1.0 + t_star)
    before = low_freq_energy(single, t_star - eta, cfg)
    after = low_freq_energy(single, t_star + eta, cfg)
    mean_part = low_freq_energy(single, 1e12, cfg).value
    mode_energy = (2 * math.pi) ** 2 * g.integrate(a ** 2)
    jump_ok = (abs(before.value - mean_part - mode_energy) <= 1e-10 * mode_energy
               and abs(after.value - mean_part) <= 1e-12 * max(mode_energy, 1e-300))
    ok = parseval_err < 1e-10 and jump_ok
    return CheckResult(7, "low-frequency ball mechanics", ok,
                       f"full-ball vs Parseval rel. error {parseval_err:.1e} (< 1e-10); mode |xi|={xi0:.4f} "
                       f"leaves the ball at t*={t_star:.6f}: inside before, mean-only after ({jump_ok})",
                       {"parseval_error": parseval_err, "t_star": t_star,
                        "before": before.value, "after": after.value, "mean_part": mean_part})


def check_8() -> CheckResult:
    rep = twin_report()
    runs = {r["epsilon"]: r for r in rep["runs"]}
    zero = runs[0.0]["sup_distance"] == 0.0
    pos = [r for r in rep["runs"] if r["epsilon"] > 0]
    times = np.asarray(rep["times"])
    below = all(not r["censored"]
                and np.max(np.asarray(r["distance"])[times[:len(r["distance"])] <= r["horizon"]])
                <= r["threshold"] for r in pos)
    spread = rep["delta_spread"]
    err = rep["err_residual_max"]
    ok = (rep["status"] == "ok" and zero and below and rep["horizon_increasing"]
          and spread < 2.0 and err < 1e-8)
    deltas = ", ".join(f"{r['delta']:.3f}" for r in pos)
    horizons = ", ".join(f"{r['horizon']:.1f}" for r in pos)
    return CheckResult(8, "twin stability", ok,
                       f"eps=0 distance {runs[0.0]['sup_distance']}; delta = [{deltas}] "
                       f"(spread {spread:.3f} < 2), horizons [{horizons}] increasing "
                       f"{rep['horizon_increasing']}; error-system residual {err:.1e} (< 1e-8)",
                       {"deltas": [r["delta"] for r in pos], "horizons": [r["horizon"] for r in pos],
                        "spread": spread, "err_residual_max": err,
                        "reference": rep["reference_monitor"]})


def random_band_limited(grid: Grid, seed: int) -> np.ndarray:
    """Mean-zero random field with a decaying, band-limited spectrum."""
    rng = np.random.default_rng(seed)
    kmax = int(rng.integers(2, 11))
    r = np.sqrt(np.sum(grid.mode_indices ** 2, axis=0))
    shape = grid.spectral_shape
    c = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * (r <= kmax) * (r > 0)
    c /= np.maximum(r, 1.0) ** rng.uniform(1.0, 3.0)
    f = grid.ifft(c)
    return f / np.abs(f).max() * rng.uniform(0.01, 0.5)


def bernstein_worst(grid: Grid, seeds=range(20)) -> float:
    """Largest ``||grad Delta_j f||_inf / (2^j ||Delta_j f||_inf)`` over shells and seeds."""
    worst = 0.0
    for s in seeds:
        f = random_band_limited(grid, s)
        lp = lp_decompose(f, grid)
        for j, b in lp.blocks:
            m = np.abs(b).max()
            if m < 1e-13 * np.abs(f).max():
                continue
            gnorm = np.sqrt(np.sum(spectral_gradient(b, grid) ** 2, axis=0)).max()
            worst = max(worst, gnorm / (2.0 ** j * m))
    return worst


def check_9() -> CheckResult:
    rng = np.random.default_rng(9)
    rt = 0.0
    for dim, n in ((1, 256), (2, 64), (3, 32)):
        g = Grid(dim, n, 2 * math.pi)
        f = rng.standard_normal(g.shape)
        rt = max(rt, float(np.abs(g.ifft(g.fft(f)) - f).max()))
    g2 = Grid(2, 64, 2 * math.pi)
    lp_err = 0.0
    for s in range(5):
        f = random_band_limited(g2, s) + 0.3
        lp_err = max(lp_err, float(np.abs(lp_decompose(f, g2).reconstruct() - f).max()))
    bern = bernstein_worst(g2)
    g3 = Grid(3, 32, 2 * math.pi)
    hold = max(interpolation_ratio(random_band_limited(g3, s), g3, 0.5) for s in HOLDER_CHECK_SEEDS)
    ok = rt < 1e-12 and lp_err < 1e-10 and bern <= 2.0 and hold <= HOLDER_INTERPOLATION_C
    return CheckResult(9, "spectral substrate", ok,
                       f"FFT round trip {rt:.1e}; LP reconstruction {lp_err:.1e}; Bernstein ratio "
                       f"{bern:.3f} (<= 2); interpolation ratio {hold:.3f} (<= C = {HOLDER_INTERPOLATION_C})",
                       {"fft_roundtrip": rt, "lp_reconstruction": lp_err, "bernstein": bern,
                        "holder_max_ratio": hold})


def determinism_hashes(workdir: Path) -> list:
    import yaml

    from .cli import main

    cfg = {"kind": "small_perturbation", "dim": 2, "n": 32, "L": 16.0, "t_end": 2.0,
           "sample_dt": 0.25, "seed": 11, "validation_size": 32,
           "bumps": [{"type": "bump", "field": "a", "amplitude": 0.05},
                     {"type": "bump", "field": "u0", "amplitude": 0.05},
                     {"type": "bump", "field": "theta", "amplitude": -0.05}]}
    path = workdir / "det.yaml"
    path.write_text(yaml.safe_dump(cfg))
    out = []
    for i in range(2):
        d = workdir / f"run{i}"
        code = main(["simulate", "--config", str(path), "--out", str(d)])
        if code != 0:
            raise AssertionError(f"simulate exited with {code}")
        from .io import sha256_file
        out.append({name: sha256_file(d / name)
                    for name in ("diagnostics.csv", "monitor.csv", "summary.json", "final.nsf")})
    return out


def check_10() -> CheckResult:
    with tempfile.TemporaryDirectory() as tmp:
        h = determinism_hashes(Path(tmp))
    same = h[0] == h[1]
    return CheckResult(10, "determinism", same,
                       f"CSV/JSON/checkpoint hashes identical across two runs: {same}",
                       {"hashes": h})


CHECKS = {1: check_1, 2: check_2, 3: check_3, 4: check_4, 5: check_5, 6: check_6,
          7: check_7, 8: check_8, 9: check_9, 10: check_10}


def run_all(only=None) -> list:
    return [CHECKS[k]() for k in sorted(CHECKS) if not only or k in only]
