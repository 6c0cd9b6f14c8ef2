"""Low-frequency energies on a shrinking ball and decay-exponent fitting."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import FluidState
from .grid import Grid


@dataclass(frozen=True)
class FreqSplitConfig:
    """``ball_constant`` sets ``S(t) = {|xi| <= C (1+t)^(-1/2)}``;
    ``split_constant`` is the ``K`` in the ``K/(1+t)`` splitting weight."""

    ball_constant: float
    split_constant: float = 1.0

    def __post_init__(self):
        if not self.ball_constant > 0 or not self.split_constant > 0:
            raise ValueError("ball_constant and split_constant must be positive")

    @classmethod
    def default(cls, grid: Grid) -> "FreqSplitConfig":
        """Ball of radius ``4 k_min`` at ``t = 0``, which holds at least the four
        lowest nonzero lattice shells in any dimension."""
        return cls(ball_constant=4.0 * grid.k_min * (1.0 + 1e-9))

    def radius(self, t: float) -> float:
        if t < 0:
            raise ValueError("t must be non-negative")
        return self.ball_constant / math.sqrt(1.0 + t)

    def exit_time(self, wavenumber: float) -> float:
        """Time after which a mode of the given wavenumber leaves the ball."""
        return (self.ball_constant / wavenumber) ** 2 - 1.0

    def to_dict(self) -> dict:
        return asdict(self)


def conservative_spectra(state: FluidState):
    """Fourier coefficients of ``a``, ``rho u`` and ``rho E1 = rho theta + rho |u|^2 / 2``."""
    g = state.grid
    rho_e1 = state.rho * state.theta + 0.5 * state.rho * np.sum(state.u ** 2, axis=0)
    return g.fft(state.a), g.fft(state.momentum), g.fft(rho_e1)


@dataclass
class LowFreqEnergy:
    value: float
    radius: float
    n_modes: int  # lattice modes inside the ball, counted over the full spectrum
    mean_only: bool


def spectral_measure(grid: Grid) -> float:
    """Factor turning ``sum |c_m|^2`` into ``int |f_hat(xi)|^2 d xi``."""
    return (2.0 * math.pi) ** grid.dim * grid.volume


def low_freq_energy(state: FluidState, t: float, cfg: FreqSplitConfig,
                    exclude_mean: bool = False) -> LowFreqEnergy:
    """``int_{S(t)} |a_hat|^2 + |(rho u)_hat|^2 + |(rho E1)_hat|^2 d xi`` as a
    lattice sum. ``mean_only`` flags a ball holding no nonzero mode."""
    g = state.grid
    r = cfg.radius(t)
    a_h, m_h, e_h = conservative_spectra(state)
    power = np.abs(a_h) ** 2 + np.sum(np.abs(m_h) ** 2, axis=0) + np.abs(e_h) ** 2
    inside = g.wavenumber <= r
    if exclude_mean:
        inside = inside & (g.wavenumber > 0)
    w = g.parseval_weight * inside
    value = spectral_measure(g) * float(np.sum(w * power))
    return LowFreqEnergy(value, r, int(np.sum(w)), bool(r < g.k_min))


def parseval_energy(state: FluidState) -> float:
    """Physical-space counterpart of the full-ball low-frequency energy."""
    g = state.grid
    rho_e1 = state.rho * state.theta + 0.5 * state.rho * np.sum(state.u ** 2, axis=0)
    total = g.integrate(state.a ** 2 + np.sum(state.momentum ** 2, axis=0) + rho_e1 ** 2)
    return (2.0 * math.pi) ** g.dim * total


# --- decay fits -------------------------------------------------------------------

POOR_FIT_RMS = 0.05


@dataclass
class DecayFit:
    channel: str
    t_a: float
    t_b: float
    exponent: float
    prefactor: float
    rms_residual: float
    n_samples: int
    poor_fit: bool
    log_corrected_rms: float = float("nan")

    def __post_init__(self):
        if not self.t_b > self.t_a:
            raise ValueError("fit window needs t_b > t_a")
        if self.rms_residual < 0:
            raise ValueError("residual must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def default_window(box_length: float, max_wave_speed: float) -> tuple:
    """``[max(1, t_cross/10), t_cross]`` with ``t_cross = L / (2 c_max)``."""
    t_cross = box_length / (2.0 * max_wave_speed)
    return max(1.0, t_cross / 10.0), t_cross


def fit_decay(times, values, window=None, channel: str = "",
              poor_fit_threshold: float = POOR_FIT_RMS) -> DecayFit:
    """Least-squares fit of ``log(norm) = p log(1+t) + log(c)`` over the window."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.shape != y.shape:
        raise ValueError("times and values differ in length")
    if window is None:
        window = (float(t.min()), float(t.max()))
    t_a, t_b = map(float, window)
    sel = (t >= t_a) & (t <= t_b)
    if sel.sum() < 8:
        raise ValueError(f"fit needs at least 8 samples in [{t_a}, {t_b}], got {int(sel.sum())}")
    t, y = t[sel], y[sel]
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError(f"channel {channel or '?'} has non-positive or non-finite values in the window")
    x = np.log1p(t)
    ly = np.log(y)
    design = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
    rms = float(np.sqrt(np.mean((design @ coef - ly) ** 2)))
    log_rms = float("nan")
    if np.all(x > 0):
        ly2 = ly - np.log(x)
        coef2, *_ = np.linalg.lstsq(design, ly2, rcond=None)
        log_rms = float(np.sqrt(np.mean((design @ coef2 - ly2) ** 2)))
    return DecayFit(channel, t_a, t_b, float(coef[0]), float(math.exp(coef[1])), rms,
                    int(sel.sum()), rms > poor_fit_threshold, log_rms)


# --- bootstrap report -----------------------------------------------------------------

def _column(records, name):
    if isinstance(records, dict):
        col = records.get(name)
        return None if col is None else np.asarray(col, dtype=float)
    if not records or not hasattr(records[0], name):
        return None
    return np.array([getattr(r, name) for r in records], dtype=float)


def decay_bootstrap_report(records, dim: int, window=None, floor: float = 1e-12,
                           tol: float = 0.2) -> dict:
    """Fitted exponents of the low-frequency energy, ``X`` and the ``H^1``
    channels, with dimension-adapted targets for the three improvement steps.

    ``records`` is a list of :class:`DiagnosticsRecord` or a dict of columns.
    The three steps are fitted on consecutive log-spaced sub-windows; the
    ordering flag is true when the fitted ``X`` exponents do not increase.
    """
    t = _column(records, "time")
    if t is None:
        raise ValueError("records carry no time column")
    if window is None:
        window = (max(1.0, float(t.min())), float(t.max()))
    half = -dim / 2.0
    targets = {"step1": 1.0 + half, "step2": half, "step3": half}
    channels = {
        "low_freq_energy": "low_freq_energy",
        "X": "X_value",
        "u_L2_squared": "u_L2",
        "state_L2": "state_L2",
        "u_H1": "u_H1",
        "a_H1": "a_H1",
        "theta_H1": "theta_H1",
    }
    report = {"dim": dim, "window": list(window), "targets": targets,
              "channels": {}, "gaps": [], "status": "ok"}
    series = {}
    for key, col in channels.items():
        y = _column(records, col)
        if y is None:
            report["gaps"].append(key)
            continue
        if key == "u_L2_squared":
            y = y ** 2
        series[key] = y
    if series and all(np.nanmax(np.abs(y)) < floor for y in series.values()):
        report["status"] = "decayed to floor"
        return report
    for key, y in series.items():
        if np.nanmax(np.abs(y)) < floor:
            report["channels"][key] = {"status": "decayed to floor"}
            continue
        try:
            report["channels"][key] = fit_decay(t, y, window, key).to_dict()
        except ValueError as exc:
            report["channels"][key] = {"status": f"fit failed: {exc}"}
    steps = {}
    if "X" in series and "X" in report["channels"] and "exponent" in report["channels"]["X"]:
        edges = np.geomspace(1.0 + window[0], 1.0 + window[1], 4) - 1.0
        for i, name in enumerate(("step1", "step2", "step3")):
            try:
                fit = fit_decay(t, series["X"], (edges[i], edges[i + 1]), f"X_{name}")
                steps[name] = {"exponent": fit.exponent, "target": targets[name],
                               "meets_target": fit.exponent <= targets[name] + tol,
                               "log_corrected_rms": fit.log_corrected_rms,
                               "rms": fit.rms_residual}
            except ValueError as exc:
                steps[name] = {"status": f"fit failed: {exc}"}
        exps = [steps[s].get("exponent") for s in ("step1", "step2", "step3")]
        report["monotone_improvement"] = (None if any(e is None for e in exps)
                                          else bool(exps[0] >= exps[1] >= exps[2]))
        u2 = report["channels"].get("u_L2_squared", {})
        if "exponent" in u2:
            report["X_vs_u2_consistent"] = bool(
                report["channels"]["X"]["exponent"] <= u2["exponent"] + tol)
    else:
        report["gaps"].append("X steps")
    report["steps"] = steps
    return report
