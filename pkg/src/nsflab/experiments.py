"""Scenarios, trajectory orchestration, twin-run stability and the error system."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import (FluidParams, FluidState, NumericalAbort, cfl_timestep, compute_rhs,
                   linear_propagator, max_wave_speed, pointwise_rhs, step, with_time)
from .freq import FreqSplitConfig, default_window, fit_decay
from .functionals import (DiagnosticsRecord, LyapunovWeights, diagnose, holder_norm,
                          hs_norm, l2, lp_norm, random_bump_state, validate_weights)
from .grid import Grid, periodic_gaussian, spectral_divergence, spectral_gradient

KINDS = ("equilibrium", "small_perturbation", "large_data", "heat_only", "twin_stability")
FIELDS = ("a", "theta", "u0", "u1", "u2")


class ScenarioError(ValueError):
    """Scenario is malformed or its initial data violate a positivity floor."""


# --- scenario -----------------------------------------------------------------

@dataclass
class Component:
    """One initial-data component.

    ``bump``: periodic Gaussian ``amplitude * exp(-|x-c|^2 / (2 width^2))``.
    ``mode``: ``amplitude * cos(k.x + phase)`` with integer ``wavevector``.
    ``shear``: ``amplitude * (tanh((y - y1)/width) - tanh((y - y2)/width) - 1)``
    along coordinate ``axis`` with ``y1, y2 = positions`` (default ``L/4, 3L/4``).
    """

    type: str
    field: str
    amplitude: float
    center: list | None = None
    width: float | None = None
    wavevector: list | None = None
    phase: float = 0.0
    axis: int = 1
    positions: list | None = None

    _KEYS = ("type", "field", "amplitude", "center", "width", "wavevector", "phase",
             "axis", "positions")

    @classmethod
    def from_dict(cls, d: dict, dim: int) -> "Component":
        if not isinstance(d, dict):
            raise ScenarioError(f"bump entries must be mappings, got {d!r}")
        unknown = sorted(set(d) - set(cls._KEYS))
        if unknown:
            raise ScenarioError(f"unknown bump keys: {unknown}")
        missing = [k for k in ("type", "field", "amplitude") if k not in d]
        if missing:
            raise ScenarioError(f"bump entry missing keys: {missing}")
        c = cls(**d)
        if c.type not in ("bump", "mode", "shear"):
            raise ScenarioError(f"bump type must be bump, mode or shear, got {c.type!r}")
        if c.field not in FIELDS or (c.field.startswith("u") and int(c.field[1]) >= dim):
            raise ScenarioError(f"invalid field {c.field!r} for dim={dim}")
        if c.type == "mode" and (c.wavevector is None or len(c.wavevector) != dim):
            raise ScenarioError("mode components need an integer wavevector of length dim")
        if c.center is not None and len(c.center) != dim:
            raise ScenarioError("bump center must have length dim")
        if c.width is not None and not c.width > 0:
            raise ScenarioError("bump width must be positive")
        if c.type == "shear" and not 0 <= c.axis < dim:
            raise ScenarioError("shear axis out of range")
        return c

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self._KEYS}

    def evaluate(self, grid: Grid, rng: np.random.Generator) -> np.ndarray:
        L = grid.box_length
        if self.type == "bump":
            center = self.center if self.center is not None else rng.uniform(0, L, grid.dim)
            width = self.width if self.width is not None else rng.uniform(L / 32, L / 8)
            return self.amplitude * periodic_gaussian(grid, center, width)
        if self.type == "mode":
            k = 2 * math.pi / L * np.asarray(self.wavevector, dtype=float)
            phase = np.tensordot(k, grid.coords, axes=1) + self.phase
            return self.amplitude * np.cos(phase)
        y = grid.coords[self.axis]
        y1, y2 = self.positions if self.positions is not None else (L / 4, 3 * L / 4)
        w = self.width if self.width is not None else L / 25
        return self.amplitude * (np.tanh((y - y1) / w) - np.tanh((y - y2) / w) - 1.0)


_DEFAULTS = {
    "name": None, "mu": 1.0, "lambda": 0.0, "bumps": [], "seed": 0, "alpha": 0.5, "s": 2.0,
    "epsilon": [1e-2, 1e-3, 1e-4], "cfl": 0.5, "dt": None, "rho_floor": 1e-6,
    "positivity_floor": 0.1, "ball_constant": None, "split_constant": 1.0, "weights": None,
    "validation_n": None, "validation_size": 256, "perturbation_widths": None,
    "fit_window": None, "project_means": True,
}
_REQUIRED = ("kind", "dim", "n", "L", "t_end", "sample_dt")


@dataclass
class Scenario:
    kind: str
    dim: int
    n: int
    L: float
    t_end: float
    sample_dt: float
    name: str | None = None
    mu: float = 1.0
    lam: float = 0.0
    bumps: list = field(default_factory=list)
    seed: int = 0
    alpha: float = 0.5
    s: float = 2.0
    epsilon: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    cfl: float = 0.5
    dt: float | None = None
    rho_floor: float = 1e-6
    positivity_floor: float = 0.1
    ball_constant: float | None = None
    split_constant: float = 1.0
    weights: dict | None = None
    validation_n: int | None = None
    validation_size: int = 256
    perturbation_widths: list | None = None
    fit_window: list | None = None
    project_means: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        """Strict parse: unknown keys and missing required keys are errors."""
        if not isinstance(d, dict):
            raise ScenarioError("scenario must be a mapping")
        unknown = sorted(set(d) - set(_REQUIRED) - set(_DEFAULTS))
        if unknown:
            raise ScenarioError(f"unknown config keys: {unknown}")
        missing = [k for k in _REQUIRED if k not in d]
        if missing:
            raise ScenarioError(f"missing required config keys: {missing}")
        merged = {**_DEFAULTS, **d}
        lam = merged.pop("lambda")
        eps = merged["epsilon"]
        merged["epsilon"] = [float(e) for e in (eps if isinstance(eps, (list, tuple)) else [eps])]
        try:
            sc = cls(lam=float(lam), **merged)
        except TypeError as exc:
            raise ScenarioError(str(exc)) from None
        sc._validate()
        sc.bumps = [b if isinstance(b, Component) else Component.from_dict(b, sc.dim)
                    for b in sc.bumps]
        return sc

    def _validate(self):
        if self.kind not in KINDS:
            raise ScenarioError(f"kind must be one of {KINDS}, got {self.kind!r}")
        for key in ("t_end", "sample_dt", "L"):
            if not float(getattr(self, key)) > 0:
                raise ScenarioError(f"{key} must be positive")
        if self.sample_dt > self.t_end:
            raise ScenarioError("sample_dt exceeds t_end")
        if not 0 < self.alpha < 1:
            raise ScenarioError("alpha must lie in (0, 1)")
        if not self.s > self.dim / 2:
            raise ScenarioError(f"s must exceed dim/2 = {self.dim / 2}")
        if any(e < 0 for e in self.epsilon):
            raise ScenarioError("epsilon values must be non-negative")
        try:
            self.grid()
            self.params()
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None

    def grid(self) -> Grid:
        return Grid(int(self.dim), int(self.n), float(self.L))

    def params(self) -> FluidParams:
        return FluidParams(mu=float(self.mu), lam=float(self.lam), cfl_safety=float(self.cfl),
                           rho_floor=float(self.rho_floor), heat_only=self.kind == "heat_only")

    def freq_config(self) -> FreqSplitConfig:
        g = self.grid()
        if self.ball_constant is None:
            return FreqSplitConfig(4.0 * g.k_min * (1.0 + 1e-9), float(self.split_constant))
        return FreqSplitConfig(float(self.ball_constant), float(self.split_constant))

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in _REQUIRED}
        for k in _DEFAULTS:
            out[k] = getattr(self, "lam" if k == "lambda" else k)
        out["bumps"] = [b.to_dict() for b in self.bumps]
        return out


# --- initial data -------------------------------------------------------------------

def build_initial_state(scenario: Scenario):
    """Deterministic initial state and the measured hypothesis quantities.

    Non-equilibrium data are dealiased; unless ``project_means`` is off, ``a``
    and ``theta`` are then made mean-zero and the total momentum is removed.
    """
    g = scenario.grid()
    if scenario.kind == "equilibrium":
        state = FluidState.equilibrium(g)
    else:
        rng = np.random.default_rng(scenario.seed)
        acc = {f: np.zeros(g.shape) for f in FIELDS[:2 + g.dim]}
        for comp in scenario.bumps:
            acc[comp.field] = acc[comp.field] + comp.evaluate(g, rng)
        a = g.dealias(acc["a"])
        th = g.dealias(acc["theta"])
        u = np.array([g.dealias(acc[f"u{i}"]) for i in range(g.dim)])
        rho = 1.0 + a
        if scenario.project_means:
            a -= a.mean()
            th -= th.mean()
            rho = 1.0 + a
            u -= (np.sum(rho * u, axis=tuple(range(1, g.dim + 1))) / np.sum(rho)).reshape(
                (g.dim,) + (1,) * g.dim)
        state = FluidState(g, rho, u, 1.0 + th)
    c = scenario.positivity_floor
    if state.rho.min() < c:
        raise ScenarioError(f"density floor violated: min rho0 = {state.rho.min():.4g} < {c}")
    if state.temp.min() < c:
        raise ScenarioError(f"temperature floor violated: min T0 = {state.temp.min():.4g} < {c}")
    info = {
        "positivity_floor": c,
        "min_rho0": float(state.rho.min()), "min_T0": float(state.temp.min()),
        "max_rho0": float(state.rho.max()), "max_T0": float(state.temp.max()),
        "a0_L1": lp_norm(state.a, g, 1), "a0_H2": hs_norm(state.a, g, 2),
        "u0_L1": lp_norm(state.u, g, 1), "u0_H2": hs_norm(state.u, g, 2),
        "theta0_H1": hs_norm(state.theta, g, 1), "theta0_H2": hs_norm(state.theta, g, 2),
    }
    return state, info


def resolve_weights(scenario: Scenario, params: FluidParams | None = None) -> LyapunovWeights:
    """Explicit weights from the scenario, else the seeded validation procedure
    on a (possibly coarser) grid with the scenario's box."""
    if scenario.weights is not None:
        try:
            return LyapunovWeights(**scenario.weights)
        except TypeError as exc:
            raise ScenarioError(f"bad weights: {exc}") from None
    params = params or scenario.params()
    cap = {1: 256, 2: 128, 3: 32}[scenario.dim]
    n_val = scenario.validation_n or min(scenario.n, cap)
    g = Grid(scenario.dim, n_val, float(scenario.L))
    return validate_weights(g, replace_heat(params), size=scenario.validation_size)


def replace_heat(params: FluidParams) -> FluidParams:
    """Weights are a property of the full system even for heat-only runs."""
    from dataclasses import replace

    return replace(params, heat_only=False)


# --- trajectories ---------------------------------------------------------------------

MONITOR_COLUMNS = ["time", "max_rho", "max_temp", "min_rho", "min_temp", "holder_rho"]


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    monitor: list = field(default_factory=list)
    states: list = field(default_factory=list)
    final_state: FluidState | None = None
    steps: int = 0
    aborted: bool = False
    abort_message: str = ""
    last_good: FluidState | None = None

    def times(self) -> np.ndarray:
        return np.array([row[0] for row in self.monitor])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def _fixed_substeps(sample_dt: float, dt: float) -> int:
    m = max(1, int(round(sample_dt / dt)))
    if abs(m * dt - sample_dt) > 1e-9 * sample_dt and m * dt > sample_dt * (1 + 1e-9):
        m += 1
    return m


def run_trajectory(state0: FluidState, params: FluidParams, end_time: float, sample_dt: float,
                   weights: LyapunovWeights | None = None, freq_cfg: FreqSplitConfig | None = None,
                   alpha: float = 0.5, dt: float | None = None, diagnostics: bool = True,
                   keep_states: bool = False, callback=None) -> Trajectory:
    """Advance ``state0`` to ``end_time`` and sample every ``sample_dt``.

    Steps come from :func:`cfl_timestep`, shrunk so that samples land exactly on
    ``k * sample_dt``; with a fixed ``dt`` the sample interval is split into
    equal steps no longer than ``dt``. A numerical abort ends the run early and
    keeps everything gathered so far, with the last good state attached.
    """
    g = state0.grid
    n_samples = int(math.floor(end_time / sample_dt + 1e-9))
    traj = Trajectory()
    if diagnostics and weights is None:
        weights = LyapunovWeights()
    state = with_time(state0, 0.0) if state0.time == 0.0 else state0
    t_start = state.time
    fixed_prop = None
    if dt is not None:
        m = _fixed_substeps(sample_dt, dt)
        dt_fixed = sample_dt / m
        fixed_prop = linear_propagator(g, params, dt_fixed)
    prop_cache = {}

    def sample(s):
        traj.monitor.append([s.time, float(s.rho.max()), float(s.temp.max()),
                             float(s.rho.min()), float(s.temp.min()),
                             holder_norm(s.rho, g, alpha)])
        if diagnostics:
            traj.records.append(diagnose(s, params, weights, freq_cfg, alpha))
        if keep_states:
            traj.states.append(s)
        if callback is not None:
            callback(s)

    sample(state)
    try:
        for k in range(1, n_samples + 1):
            target = t_start + k * sample_dt
            if fixed_prop is not None:
                for _ in range(m):
                    state = step(state, params, dt_fixed, fixed_prop)
                    traj.steps += 1
            else:
                while True:
                    remaining = target - state.time
                    if remaining <= 1e-12 * max(1.0, abs(target)):
                        break
                    h_cfl = cfl_timestep(state, params)
                    nsub = max(1, math.ceil(remaining / h_cfl - 1e-9))
                    h = remaining / nsub
                    key = round(h, 15)
                    prop = prop_cache.get(key)
                    if prop is None:
                        prop_cache.clear()
                        prop = prop_cache[key] = linear_propagator(g, params, h)
                    state = step(state, params, h, prop)
                    traj.steps += 1
            state = with_time(state, target)
            sample(state)
    except NumericalAbort as exc:
        traj.aborted = True
        traj.abort_message = str(exc)
        traj.last_good = exc.last_good
    traj.final_state = state
    if traj.last_good is None:
        traj.last_good = state
    return traj


def assumption_monitor(traj: Trajectory) -> dict:
    """Measured ``M1 = sup max(rho, T)``, ``M2 = sup Hoelder(rho)`` and lower bounds."""
    mon = np.array(traj.monitor, dtype=float)
    if mon.size == 0:
        return {"M1": float("nan"), "M2": float("nan")}
    return {
        "M1": float(max(mon[:, 1].max(), mon[:, 2].max())),
        "M2": float(mon[:, 5].max()),
        "sup_rho": float(mon[:, 1].max()), "sup_temp": float(mon[:, 2].max()),
        "min_rho": float(mon[:, 3].min()), "min_temp": float(mon[:, 4].min()),
        "min_rho_ratio": float(mon[:, 3].min() / mon[0, 3]),
        "min_temp_ratio": float(mon[:, 4].min() / mon[0, 4]),
        "samples": int(mon.shape[0]),
    }


@dataclass
class SimulationResult:
    scenario: Scenario
    params: FluidParams
    weights: LyapunovWeights
    freq_cfg: FreqSplitConfig
    initial_info: dict
    trajectory: Trajectory
    monitor: dict
    fits: dict

    def resolved(self) -> dict:
        return {"params": self.params.to_dict(), "weights": self.weights.to_dict(),
                "freq_split": self.freq_cfg.to_dict(), "initial": self.initial_info,
                "fit_window": self.fits.get("window")}


def decay_window(scenario: Scenario, state0: FluidState) -> tuple:
    if scenario.fit_window is not None:
        return tuple(map(float, scenario.fit_window))
    w = default_window(scenario.L, max(max_wave_speed(state0), 1e-12))
    return w[0], min(w[1], scenario.t_end)


def fit_channels(traj: Trajectory, window, channels=("state_L2", "state_H1", "u_H1",
                                                       "a_H1", "theta_H1", "X_value")) -> dict:
    out = {"window": list(window), "fits": {}}
    if not traj.records:
        return out
    t = traj.column("time")
    for ch in channels:
        y = traj.column(ch)
        try:
            out["fits"][ch] = fit_decay(t, y, window, ch).to_dict()
        except ValueError as exc:
            out["fits"][ch] = {"status": f"not fitted: {exc}"}
    return out


def simulate_scenario(scenario: Scenario, weights: LyapunovWeights | None = None,
                      callback=None) -> SimulationResult:
    params = scenario.params()
    state0, info = build_initial_state(scenario)
    weights = weights or resolve_weights(scenario, params)
    freq_cfg = scenario.freq_config()
    traj = run_trajectory(state0, params, scenario.t_end, scenario.sample_dt, weights, freq_cfg,
                          scenario.alpha, scenario.dt, callback=callback)
    window = decay_window(scenario, state0)
    fits = fit_channels(traj, window) if scenario.kind != "equilibrium" else {
        "window": list(window), "fits": {}}
    return SimulationResult(scenario, params, weights, freq_cfg, info, traj,
                            assumption_monitor(traj), fits)


# --- error system --------------------------------------------------------------------

def error_source_terms(ref: FluidState, pert: FluidState, params: FluidParams):
    """Source terms of the system for ``h = rho - rho_ref``, ``v = u - u_ref``,
    ``Th = T - T_ref``::

        h_t  = -u.grad h - v.grad rho_ref - rho div v - h div u_ref
        rho v_t  - mu lap v - (mu + lambda) grad div v = W1
        rho Th_t - lap Th = W2

    Returns ``(W1, W2, residual)`` where the residual compares the time
    derivatives from two full right-hand-side evaluations with the right-hand
    sides above, both dealiased, relative to the size of the full right-hand
    side of the perturbed state (the differences are O(perturbation), so a
    purely relative measure would be dominated by cancellation).
    """
    if ref.grid != pert.grid:
        raise ValueError("reference and perturbed states live on different grids")
    if ref.time != pert.time:
        raise ValueError(f"states at different times: {ref.time} vs {pert.time}")
    g = ref.grid
    rho_b, u_b, T_b = ref.rho, ref.u, ref.temp
    rho, u, T = pert.rho, pert.u, pert.temp
    h, v, th = rho - rho_b, u - u_b, T - T_b
    _, ub_t, Tb_t = pointwise_rhs(ref, params)
    grad = spectral_gradient

    def adv(w, gw):
        return np.einsum("j...,ij...->i...", w, gw)

    grad_ub, grad_v = grad(u_b, g), grad(v, g)
    div_ub = np.trace(grad_ub, axis1=0, axis2=1)
    div_v = np.trace(grad_v, axis1=0, axis2=1)
    pres_err = h * th + h * T_b + rho_b * th

    r_h = (-np.sum(u * grad(h, g), axis=0) - np.sum(v * grad(rho_b, g), axis=0)
           - rho * div_v - h * div_ub)

    W1 = -(h * ub_t + h * adv(u_b, grad_ub) + rho * adv(u_b, grad_v) + rho * adv(v, grad_ub)
           + rho * adv(v, grad_v) + grad(pres_err, g))
    vh = g.fft(v)
    k = g.kderiv
    lame_v = g.ifft(-params.mu * g.ksq * vh - (params.mu + params.lam) * k * np.sum(k * vh, axis=0))
    r_v = (W1 + lame_v) / rho

    D_ub = grad_ub + np.swapaxes(grad_ub, 0, 1)
    D_v = grad_v + np.swapaxes(grad_v, 0, 1)
    grad_T = grad(T, g)
    W2 = (-(h * Tb_t + rho * np.sum(u_b * grad(th, g), axis=0)
            + h * np.sum(u_b * grad(T_b, g), axis=0) + rho * np.sum(v * grad_T, axis=0)
            + rho * T * div_v + pres_err * div_ub)
          + 0.5 * params.mu * np.sum(D_v ** 2, axis=(0, 1))
          + params.mu * np.sum(D_ub * D_v, axis=(0, 1))
          + params.lam * div_v ** 2 + 2.0 * params.lam * div_v * div_ub)
    lap_th = g.ifft(-g.ksq * g.fft(th))
    r_T = (W2 + lap_th) / rho

    d_ref = compute_rhs(ref, params)
    d_pert = compute_rhs(pert, params)
    lhs = [d_pert.d_rho - d_ref.d_rho, d_pert.d_u - d_ref.d_u, d_pert.d_temp - d_ref.d_temp]
    rhs = [g.dealias(r_h), g.dealias(r_v), g.dealias(r_T)]
    num = math.sqrt(sum(l2(a - b, g) ** 2 for a, b in zip(lhs, rhs)))
    # scale of the quantities being differenced, where the rounding floor lives
    full = math.sqrt(l2(d_pert.d_rho, g) ** 2 + l2(d_pert.d_u, g) ** 2 + l2(d_pert.d_temp, g) ** 2)
    den = max(full, math.sqrt(sum(l2(a, g) ** 2 for a in lhs)))
    residual = num / den if den > 0 else num
    return W1, W2, residual


# --- twin runs ---------------------------------------------------------------------------

def hs_distance(s1: FluidState, s2: FluidState, s: float) -> float:
    """``||h||_{H^s} + ||v||_{H^s} + ||T - T_ref||_{H^s}``."""
    g = s1.grid
    return (hs_norm(s1.rho - s2.rho, g, s) + hs_norm(s1.u - s2.u, g, s)
            + hs_norm(s1.temp - s2.temp, g, s))


def perturbation_direction(scenario: Scenario) -> FluidState:
    """Seeded smooth direction ``(a, u, theta)`` with unit ``H^s`` size, returned
    as a state offset from equilibrium."""
    g = scenario.grid()
    rng = np.random.default_rng([scenario.seed, 7919])
    widths = scenario.perturbation_widths or (g.box_length / 16, g.box_length / 4)
    d = random_bump_state(g, rng, 1.0, tuple(widths), n_bumps=3)
    eq = FluidState.equilibrium(g)
    norm = hs_distance(d, eq, scenario.s)
    return FluidState(g, 1.0 + d.a / norm, d.u / norm, 1.0 + d.theta / norm)


def twin_timestep(scenario: Scenario, state0: FluidState) -> float:
    if scenario.dt is not None:
        return float(scenario.dt)
    g = state0.grid
    # margin for growth of the wave speed along the run
    return scenario.cfl * g.spacing / (1.25 * max_wave_speed(state0))


def bisect_delta(times, dist, epsilon: float, iters: int = 60):
    """Largest ``delta`` in ``[0, t_end / |ln eps|]`` with ``dist <= sqrt(eps)``
    on every sample ``t <= delta |ln eps|``; ``censored`` means the cap holds."""
    times = np.asarray(times)
    dist = np.asarray(dist)
    log_eps = abs(math.log(epsilon))
    thresh = math.sqrt(epsilon)
    cap = float(times.max()) / log_eps

    def ok(delta):
        sel = times <= delta * log_eps
        return bool(np.all(dist[sel] <= thresh))

    if ok(cap):
        return cap, True
    lo, hi = 0.0, cap
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo, False


def envelope(times, epsilon: float, delta: float, dim: int) -> np.ndarray:
    """Shape ``min{(1 + delta |ln eps|)^(-d/4), (1 + t)^(-d/4) + eps}``."""
    p = dim / 4.0
    t = np.asarray(times, dtype=float)
    plateau = (1.0 + delta * abs(math.log(epsilon))) ** (-p)
    return np.minimum(plateau, (1.0 + t) ** (-p) + epsilon)


def twin_stability_run(scenario: Scenario, epsilons=None, reference: Trajectory | None = None,
                       err_every: int = 1) -> dict:
    """Reference run plus one perturbed run per ``epsilon`` under the same fixed
    time steps; ``H^s`` distances, bisected ``delta``, envelope constants and the
    error-system residual on sampled pairs."""
    params = scenario.params()
    ref0, info = build_initial_state(scenario)
    dt = twin_timestep(scenario, ref0)
    if reference is None:
        reference = run_trajectory(ref0, params, scenario.t_end, scenario.sample_dt,
                                   alpha=scenario.alpha, dt=dt, diagnostics=False,
                                   keep_states=True)
    report = {"initial": info, "dt": dt, "s": scenario.s,
              "reference_monitor": assumption_monitor(reference),
              "reference_aborted": reference.aborted, "runs": [], "status": "ok"}
    if reference.aborted:
        report["status"] = f"invalid: reference run aborted ({reference.abort_message})"
        return report
    direction = perturbation_direction(scenario)
    times = [s.time for s in reference.states]
    report["times"] = times
    eps_list = scenario.epsilon if epsilons is None else list(epsilons)
    for eps in eps_list:
        pert0 = FluidState(ref0.grid, ref0.rho + eps * direction.a, ref0.u + eps * direction.u,
                           ref0.temp + eps * direction.theta)
        if pert0.rho.min() < scenario.positivity_floor or pert0.temp.min() < scenario.positivity_floor:
            raise ScenarioError(f"epsilon={eps} perturbation violates the positivity floor")
        dist = []
        err = []
        it = iter(reference.states)
        idx = [0]

        def on_sample(s, _it=it):
            r = next(_it)
            dist.append(hs_distance(s, r, scenario.s))
            # the error system describes the full equations, not the heat-only reduction
            if eps > 0 and not params.heat_only and idx[0] % err_every == 0:
                err.append(error_source_terms(r, s, params)[2])
            idx[0] += 1

        pert = run_trajectory(pert0, params, scenario.t_end, scenario.sample_dt,
                              alpha=scenario.alpha, dt=dt, diagnostics=False, callback=on_sample)
        run = {"epsilon": eps, "distance": dist, "sup_distance": max(dist),
               "initial_distance": dist[0], "aborted": pert.aborted,
               "err_residual_max": max(err) if err else 0.0}
        if eps > 0:
            delta, censored = bisect_delta(times[:len(dist)], dist, eps)
            env = envelope(times[:len(dist)], eps, delta, scenario.dim)
            run.update({
                "delta": delta, "censored": censored, "horizon": delta * abs(math.log(eps)),
                "threshold": math.sqrt(eps), "envelope": env.tolist(),
                "envelope_constant": float(np.max(np.asarray(dist) / env)),
                "sup_over_eps": max(dist) / eps,
            })
        report["runs"].append(run)
    pos = [r for r in report["runs"] if r["epsilon"] > 0]
    if pos:
        deltas = [r["delta"] for r in pos]
        horizons = [r["horizon"] for r in sorted(pos, key=lambda r: -r["epsilon"])]
        report["delta_spread"] = max(deltas) / min(deltas) if min(deltas) > 0 else float("inf")
        report["horizon_increasing"] = bool(all(b > a for a, b in zip(horizons, horizons[1:])))
        report["any_censored"] = any(r["censored"] for r in pos)
        report["err_residual_max"] = max(r["err_residual_max"] for r in pos)
    return report
