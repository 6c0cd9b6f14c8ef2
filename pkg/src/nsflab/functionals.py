"""Instantaneous functionals of a :class:`~nsflab.core.FluidState`.

Energies, the effective viscous flux, material derivatives, the auxiliary
functions ``f, F, H``, the Lyapunov functional ``X`` and assorted norms.
Time derivatives always come from :func:`~nsflab.core.compute_rhs`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .core import FluidParams, FluidState, compute_rhs
from .grid import (Grid, inverse_lambda_gradient, lp_decompose, periodic_gaussian, spectral_curl,
                   spectral_divergence, spectral_gradient, spectral_laplacian)

SCHEMA_VERSION = "1"


# --- norms ---------------------------------------------------------------------

def _magnitude(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Pointwise Euclidean (Frobenius) magnitude of a scalar/vector/tensor field."""
    if f.ndim == grid.dim:
        return np.abs(f)
    extra = tuple(range(f.ndim - grid.dim))
    return np.sqrt(np.sum(f ** 2, axis=extra))


def lp_norm(f: np.ndarray, grid: Grid, p: float) -> float:
    m = _magnitude(f, grid)
    if math.isinf(p):
        return float(m.max())
    return float((np.sum(m ** p) * grid.cell_volume) ** (1.0 / p))


def l2(f: np.ndarray, grid: Grid) -> float:
    return lp_norm(f, grid, 2)


def hs_norm(f: np.ndarray, grid: Grid, s: float) -> float:
    """``H^s`` norm through the Fourier weight ``(1 + |xi|^2)^(s/2)``."""
    c2 = np.abs(grid.fft(f)) ** 2
    if c2.ndim > grid.dim:
        c2 = c2.reshape((-1,) + grid.spectral_shape).sum(axis=0)
    weight = (1.0 + grid.wavenumber ** 2) ** s
    return float(np.sqrt(grid.volume * np.sum(grid.parseval_weight * weight * c2)))


def h1_physical(f: np.ndarray, grid: Grid) -> float:
    """``sqrt(||f||^2 + ||grad f||^2)`` evaluated in physical space."""
    return math.sqrt(l2(f, grid) ** 2 + l2(spectral_gradient(f, grid), grid) ** 2)


def _hessian(f: np.ndarray, grid: Grid) -> np.ndarray:
    fh = grid.fft(f)
    k = grid.kderiv
    return grid.ifft(-k[:, None] * k[None, :] * fh)


# --- energy identity -----------------------------------------------------------

@dataclass
class EnergyLedger:
    entropy_density_int: float
    kinetic: float
    temp_entropy_int: float
    dissipation_T: float
    fisher_T: float
    weighted_u4: float

    @property
    def energy(self) -> float:
        """The quantity whose decay the identity controls."""
        return self.entropy_density_int + self.kinetic + self.temp_entropy_int

    @property
    def dissipation(self) -> float:
        return self.dissipation_T + self.fisher_T


def _xlogx_entropy(rho: np.ndarray) -> np.ndarray:
    return rho * np.log(rho) - rho + 1.0


def energy_identity_terms(state: FluidState, params: FluidParams) -> EnergyLedger:
    """Entropy/kinetic energies and their dissipation.

    The viscous dissipation uses ``mu/2 |grad u + grad u'|^2 + lambda (div u)^2``,
    the heating term of the temperature equation, divided by ``T``.
    """
    g = state.grid
    if state.temp.min() <= 0:
        raise ValueError("temperature must be positive to evaluate the energy identity")
    rho, T, u = state.rho, state.temp, state.u
    grad_u = spectral_gradient(u, g)
    div_u = np.trace(grad_u, axis1=0, axis2=1)
    sym = grad_u + np.swapaxes(grad_u, 0, 1)
    heat = 0.5 * params.mu * np.sum(sym ** 2, axis=(0, 1)) + params.lam * div_u ** 2
    grad_T = spectral_gradient(T, g)
    u2 = np.sum(u ** 2, axis=0)
    return EnergyLedger(
        entropy_density_int=g.integrate(_xlogx_entropy(rho)),
        kinetic=0.5 * g.integrate(rho * u2),
        temp_entropy_int=g.integrate(rho * (T - np.log(T) - 1.0)),
        dissipation_T=g.integrate(heat / T),
        fisher_T=g.integrate(np.sum(grad_T ** 2, axis=0) / T ** 2),
        weighted_u4=g.integrate(rho * u2 ** 2),
    )


def energy_identity_residual(times, energies, dissipations) -> float:
    """Max over interior samples of ``|dE/dt + D|``, normalised by ``max D``.

    ``dE/dt`` is a centred difference, so the samples must be uniformly spaced.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(energies, dtype=float)
    d = np.asarray(dissipations, dtype=float)
    if t.size < 3:
        raise ValueError("need at least 3 samples")
    h = np.diff(t)
    if np.max(np.abs(h - h[0])) > 1e-9 * max(abs(h[0]), 1e-300):
        raise ValueError("energy residual needs uniformly spaced samples")
    dedt = (e[2:] - e[:-2]) / (2.0 * h[0])
    res = np.abs(dedt + d[1:-1])
    scale = np.max(np.abs(d))
    if scale == 0.0:
        return float(res.max())
    return float(res.max() / scale)


def coercivity_constants(m1: float, rho_min: float) -> tuple:
    """Taylor lower bounds for ``rho ln rho - rho + 1 >= c_rho a^2`` and
    ``rho (T - ln T - 1) >= c_T theta^2`` when ``rho, T <= m1``."""
    return 1.0 / (2.0 * m1), rho_min / (2.0 * m1 ** 2)


# --- effective flux and material derivatives -----------------------------------

def effective_flux(state: FluidState, params: FluidParams):
    """``G = (2 mu + lambda) div u - (P - 1)``.

    Returns ``(G, decomposition_error)`` where the error is the max deviation of
    ``div u`` from ``(G + rho theta + a) / (2 mu + lambda)``.
    """
    div_u = spectral_divergence(state.u, state.grid)
    G = params.bulk * div_u - (state.pressure - 1.0)
    recon = (G + state.rho * state.theta + state.a) / params.bulk
    return G, float(np.max(np.abs(div_u - recon)))


def material_derivatives(state: FluidState, params: FluidParams, rhs=None):
    """``(u_dot, theta_dot)`` with ``f_dot = f_t + u.grad f`` and ``f_t`` from the RHS."""
    if rhs is None:
        rhs = compute_rhs(state, params)
    g = state.grid
    u_dot = rhs.d_u + np.einsum("j...,ij...->i...", state.u, rhs.grad_u)
    theta_dot = rhs.d_temp + np.sum(state.u * spectral_gradient(state.temp, g), axis=0)
    return u_dot, theta_dot


def _rel_residual(lhs: np.ndarray, rhs: np.ndarray, grid: Grid) -> float:
    scale = max(l2(lhs, grid), l2(rhs, grid))
    diff = l2(lhs - rhs, grid)
    return diff / scale if scale > 0 else diff


def elliptic_flux_residual(state: FluidState, params: FluidParams, rhs=None) -> tuple:
    """Relative residuals of ``lap G = div(rho u_dot)`` and
    ``mu lap curl u = curl(rho u_dot)``."""
    g = state.grid
    u_dot, _ = material_derivatives(state, params, rhs)
    accel = state.rho * u_dot
    G, _ = effective_flux(state, params)
    res_G = _rel_residual(spectral_laplacian(G, g), spectral_divergence(accel, g), g)
    if g.dim == 1:
        return res_G, 0.0
    curl_u = spectral_curl(state.u, g)
    lap_curl = spectral_laplacian(curl_u, g) if g.dim == 2 else np.array(
        [spectral_laplacian(c, g) for c in curl_u])
    res_c = _rel_residual(params.mu * lap_curl, spectral_curl(accel, g), g)
    return res_G, res_c


# --- auxiliary functions ---------------------------------------------------------

def aux_functions(a, theta, rho):
    """``f(a) = a - ln(1+a)``, ``F(a) = a^2/2 + a - (1+a) ln(1+a)`` and
    ``H(a, theta) = rho theta (theta/2 - a theta/2 - a) - f(a)``."""
    a = np.asarray(a, dtype=float)
    if np.any(a <= -1.0):
        raise ValueError("aux_functions need a > -1")
    theta = np.asarray(theta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    l1p = np.log1p(a)
    f = a - l1p
    F = 0.5 * a ** 2 + a - (1.0 + a) * l1p
    H = rho * theta * (0.5 * theta - 0.5 * a * theta - a) - f
    return f, F, H


def f_quadratic_constant(a_max: float) -> float:
    """Taylor constant ``c`` with ``f(a) <= c a^2`` on ``|a| <= a_max < 1``."""
    return 0.5 / (1.0 - a_max) ** 2


# --- Lyapunov functional --------------------------------------------------------

@dataclass
class LyapunovWeights:
    A1: float = 1.0
    A2: float = 1.0
    A3: float = 1.0
    A4: float = 1.0
    A5: float = 1.0
    A6: float = 1.0
    ratio_lo: float = float("nan")
    ratio_hi: float = float("nan")
    family_size: int = 0

    def __post_init__(self):
        for name in ("A1", "A2", "A3", "A4", "A5", "A6"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def as_vector(self) -> np.ndarray:
        return np.array([self.A1, self.A2, self.A3, self.A4, self.A5, self.A6])

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class XBreakdown:
    value: float
    groups: np.ndarray  # unweighted groups 1..6
    equivalent_norm: float  # ||u||_H1^2 + ||a||_H1^2 + ||u_dot||^2 + ||theta||_H1^2

    @property
    def ratio(self) -> float:
        return self.value / self.equivalent_norm if self.equivalent_norm > 0 else float("nan")


def lyapunov_groups(state: FluidState, params: FluidParams, rhs=None):
    """Unweighted groups of ``X`` and the equivalent squared norm."""
    g = state.grid
    if rhs is None:
        rhs = compute_rhs(state, params)
    rho, u, a, th = state.rho, state.u, state.a, state.theta
    grad_u = rhs.grad_u
    div_u = rhs.div_u
    u2 = np.sum(u ** 2, axis=0)
    _, F, H = aux_functions(a, th, rho)
    g1 = g.integrate(rho * u2 ** 2)
    g2 = (params.mu * g.integrate(np.sum(grad_u ** 2, axis=(0, 1)))
          + (params.lam + params.mu) * g.integrate(div_u ** 2)
          - g.integrate((state.pressure - 1.0) * div_u)
          - g.integrate(H - F) / params.bulk)
    g3 = lp_norm(a, g, 6) ** 2
    g4 = (g.integrate(_xlogx_entropy(rho)) + g.integrate(rho * u2)
          + g.integrate(rho * (state.temp - np.log(state.temp) - 1.0)))
    u_dot, _ = material_derivatives(state, params, rhs)
    grad_th = spectral_gradient(th, g)
    grad_a = spectral_gradient(a, g)
    udot2 = g.integrate(np.sum(u_dot ** 2, axis=0))
    g5 = g.integrate(rho * np.sum(u_dot ** 2, axis=0)) + g.integrate(np.sum(grad_th ** 2, axis=0))
    g6 = g.integrate(np.sum(grad_a ** 2, axis=0))
    gu2 = g.integrate(np.sum(grad_u ** 2, axis=(0, 1)))
    equiv = (g.integrate(u2) + gu2 + g.integrate(a ** 2) + g6 + udot2
             + g.integrate(th ** 2) + g.integrate(np.sum(grad_th ** 2, axis=0)))
    return np.array([g1, g2, g3, g4, g5, g6]), equiv


def lyapunov_X(state: FluidState, params: FluidParams, weights: LyapunovWeights,
               rhs=None) -> XBreakdown:
    groups, equiv = lyapunov_groups(state, params, rhs)
    return XBreakdown(float(weights.as_vector() @ groups), groups, float(equiv))


def random_bump_state(grid: Grid, rng: np.random.Generator, amplitude: float,
                      width_range: tuple, n_bumps: int = 3,
                      active=("a", "u", "theta")) -> FluidState:
    """Smooth random state built from periodic Gaussian bumps.

    Only the fields named in ``active`` are perturbed; perturbations are
    mean-zero and band-limited by the dealiasing filter. Widths are drawn
    log-uniformly from ``width_range``.
    """
    L = grid.box_length
    log_w = np.log(width_range)

    def bumps():
        out = np.zeros(grid.shape)
        for _ in range(n_bumps):
            c = rng.uniform(0, L, grid.dim)
            w = math.exp(rng.uniform(*log_w))
            amp = rng.uniform(-1, 1) * amplitude
            out += amp * periodic_gaussian(grid, c, w)
        out -= out.mean()
        return grid.dealias(out)

    zero = np.zeros(grid.shape)
    a = bumps() if "a" in active else zero
    th = bumps() if "theta" in active else zero
    u = np.array([bumps() if "u" in active else zero for _ in range(grid.dim)])
    return FluidState(grid, 1.0 + a, u, 1.0 + th)


_FIELD_SUBSETS = (("a", "u", "theta"), ("a",), ("u",), ("theta",),
                  ("a", "u"), ("a", "theta"), ("u", "theta"))


def validation_family(grid: Grid, size: int = 256, seed: int = 20240611,
                      width_range: tuple | None = None) -> list:
    """Seeded family of small/moderate-amplitude states for weight selection.

    Members cycle through every non-empty subset of excited fields and
    alternate between small (<= 0.02) and moderate (<= 0.2) amplitudes.
    """
    rng = np.random.default_rng(seed)
    if width_range is None:
        width_range = (max(2 * grid.spacing, grid.box_length / 64), grid.box_length / 4)
    out = []
    for i in range(size):
        amp = 0.02 if i % 2 == 0 else 0.2
        out.append(random_bump_state(grid, rng, amp * rng.uniform(0.25, 1.0), width_range,
                                     n_bumps=int(rng.integers(1, 5)),
                                     active=_FIELD_SUBSETS[i % len(_FIELD_SUBSETS)]))
    return out


def select_weights(groups: np.ndarray, equiv: np.ndarray, a4_exponents=range(0, 11)):
    """Choose ``A4`` as the smallest power of two that keeps ``X > 0`` on the
    family and minimises the spread ``max(ratio)/min(ratio)``; other weights are 1.

    ``groups`` has shape ``(family, 6)``.
    """
    best = None
    for e in a4_exponents:
        w = np.array([1.0, 1.0, 1.0, 2.0 ** e, 1.0, 1.0])
        X = groups @ w
        if np.any(X <= 0):
            continue
        ratio = X / equiv
        spread = ratio.max() / ratio.min()
        if best is None or spread < best[0] * (1 - 1e-12):
            best = (spread, e, ratio.min(), ratio.max())
    if best is None:
        raise RuntimeError("no admissible A4 keeps X positive on the family")
    spread, e, lo, hi = best
    return LyapunovWeights(A4=2.0 ** e, ratio_lo=float(lo), ratio_hi=float(hi),
                           family_size=len(equiv))


def validate_weights(grid: Grid, params: FluidParams, size: int = 256,
                     seed: int = 20240611, width_range: tuple | None = None) -> LyapunovWeights:
    family = validation_family(grid, size, seed, width_range)
    rows = [lyapunov_groups(s, params) for s in family]
    groups = np.array([r[0] for r in rows])
    equiv = np.array([r[1] for r in rows])
    return select_weights(groups, equiv)


# --- norm suite, Hoelder norm, velocity control -----------------------------------

def norm_suite(state: FluidState, s_values=(1.0, 2.0)) -> dict:
    g = state.grid
    out = {}
    fields_ = {"a": state.a, "u": state.u, "theta": state.theta}
    for name, f in fields_.items():
        grad = spectral_gradient(f, g)
        hess = _hessian(f, g) if f.ndim == g.dim else np.array([_hessian(c, g) for c in f])
        for label, arr in ((name, f), (f"grad_{name}", grad), (f"hess_{name}", hess)):
            for p, tag in ((2, "L2"), (4, "L4"), (6, "L6"), (math.inf, "Linf")):
                out[f"{label}_{tag}"] = lp_norm(arr, g, p)
        for s in s_values:
            out[f"{name}_H{s:g}"] = hs_norm(f, g, s)
    return out


def holder_norm(f: np.ndarray, grid: Grid, alpha: float, lp=None) -> float:
    """Besov-type surrogate ``||f||_inf + sup_j 2^(j alpha) ||Delta_j f||_inf``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if lp is None:
        lp = lp_decompose(f, grid)
    shell = max((2.0 ** (j * alpha) * float(np.max(np.abs(b))) for j, b in lp.blocks), default=0.0)
    return float(np.max(np.abs(f))) + shell


def holder_shell_part(f: np.ndarray, grid: Grid, alpha: float) -> float:
    return holder_norm(f, grid, alpha) - float(np.max(np.abs(f)))


def interpolation_ratio(a: np.ndarray, grid: Grid, alpha: float) -> float:
    """``||grad Lambda^-1 a||_inf / (||a||_L6^beta ||a||_C^alpha^(1-beta))``."""
    beta = 1.0 - 1.0 / (1.0 + 2.0 * alpha)
    v, _ = inverse_lambda_gradient(a, grid)
    lhs = lp_norm(v, grid, math.inf)
    rhs = lp_norm(a, grid, 6) ** beta * holder_norm(a, grid, alpha) ** (1.0 - beta)
    return lhs / rhs


def _deriv_norm(f: np.ndarray, grid: Grid, order: int, p: float) -> float:
    arr = f
    for _ in range(order):
        arr = spectral_gradient(arr, grid) if arr.ndim == grid.dim else np.array(
            [spectral_gradient(c, grid) for c in arr.reshape((-1,) + grid.shape)])
    return lp_norm(arr, grid, p)


def velocity_control_check(state: FluidState, params: FluidParams) -> dict:
    """Both sides of the curl/flux/pressure bounds on ``||grad^i u||`` for
    ``i = 1, 2`` and ``p in {2, 6}``; ``constant`` is the realised LHS/RHS."""
    g = state.grid
    curl_u = spectral_curl(state.u, g)
    G, _ = effective_flux(state, params)
    pm1 = state.pressure - 1.0
    div_part = G / params.bulk
    report = {}
    for i in (1, 2):
        for p in (2, 6):
            lhs = _deriv_norm(state.u, g, i, p)
            terms = {"curl": _deriv_norm(curl_u, g, i - 1, p),
                     "flux": _deriv_norm(div_part, g, i - 1, p),
                     "pressure": _deriv_norm(pm1, g, i - 1, p) / params.bulk}
            rhs = sum(terms.values())
            report[f"i{i}_p{p}"] = {"lhs": lhs, "rhs": rhs, "terms": terms,
                                    "constant": lhs / rhs if rhs > 0 else float("nan")}
        lhs = _deriv_norm(state.u, g, i, 6)
        terms = {"curl": _deriv_norm(curl_u, g, i, 2),
                 "flux": _deriv_norm(G, g, i, 2) / params.bulk,
                 "pressure": _deriv_norm(pm1, g, i - 1, 6) / params.bulk}
        rhs = sum(terms.values())
        report[f"i{i}_sobolev"] = {"lhs": lhs, "rhs": rhs, "terms": terms,
                                   "constant": lhs / rhs if rhs > 0 else float("nan")}
    return report


# --- diagnostics record ------------------------------------------------------------

@dataclass
class DiagnosticsRecord:
    time: float
    a_L2: float
    a_L6: float
    a_Linf: float
    u_L2: float
    u_L6: float
    u_Linf: float
    theta_L2: float
    theta_L6: float
    theta_Linf: float
    grad_u_L2: float
    grad_u_L6: float
    grad_u_Linf: float
    grad_theta_L2: float
    grad_theta_L6: float
    grad_theta_Linf: float
    grad_a_L2: float
    grad_a_L6: float
    grad_a_Linf: float
    hess_a_L2: float
    hess_a_L6: float
    hess_a_Linf: float
    a_H1: float
    u_H1: float
    theta_H1: float
    state_L2: float  # ||(a, u, theta)||_L2
    state_H1: float  # ||u||_H1 + ||a||_H1 + ||theta||_H1
    udot_L2: float
    G_L2: float
    grad_G_L2: float
    G_W16: float
    curl_u_L2: float
    grad_curl_u_L2: float
    X_value: float
    X_ratio: float
    X_g1: float
    X_g2: float
    X_g3: float
    X_g4: float
    X_g5: float
    X_g6: float
    entropy_density_int: float
    kinetic: float
    temp_entropy_int: float
    dissipation_T: float
    fisher_T: float
    weighted_u4: float
    energy: float
    dissipation: float
    mass: float
    total_energy: float
    momentum_L1: float
    min_rho: float
    max_rho: float
    min_temp: float
    max_temp: float
    holder_a: float
    low_freq_energy: float
    elliptic_res_G: float
    elliptic_res_curl: float

    @classmethod
    def columns(cls) -> list:
        return [f.name for f in fields(cls)]

    def as_row(self) -> list:
        return [getattr(self, c) for c in self.columns()]

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.as_row())


def diagnose(state: FluidState, params: FluidParams, weights: LyapunovWeights,
             freq_cfg=None, alpha: float = 0.5) -> DiagnosticsRecord:
    """Evaluate every tracked functional of ``state``."""
    from .freq import FreqSplitConfig, low_freq_energy

    g = state.grid
    if freq_cfg is None:
        freq_cfg = FreqSplitConfig.default(g)
    rhs = compute_rhs(state, params)
    a, u, th = state.a, state.u, state.theta
    grad_u = rhs.grad_u
    grad_th = spectral_gradient(th, g)
    grad_a = spectral_gradient(a, g)
    hess_a = _hessian(a, g)
    G, _ = effective_flux(state, params)
    grad_G = spectral_gradient(G, g)
    curl_u = spectral_curl(u, g)
    grad_curl = spectral_gradient(curl_u, g) if g.dim == 2 else (
        np.array([spectral_gradient(c, g) for c in curl_u]) if g.dim == 3 else np.zeros(g.shape))
    u_dot, _ = material_derivatives(state, params, rhs)
    xb = lyapunov_X(state, params, weights, rhs)
    led = energy_identity_terms(state, params)
    res_G, res_c = elliptic_flux_residual(state, params, rhs)
    a_h1, u_h1, th_h1 = hs_norm(a, g, 1), hs_norm(u, g, 1), hs_norm(th, g, 1)

    def trio(f):
        return lp_norm(f, g, 2), lp_norm(f, g, 6), lp_norm(f, g, math.inf)

    vals = {}
    for name, arr in (("a", a), ("u", u), ("theta", th), ("grad_u", grad_u),
                      ("grad_theta", grad_th), ("grad_a", grad_a), ("hess_a", hess_a)):
        vals[f"{name}_L2"], vals[f"{name}_L6"], vals[f"{name}_Linf"] = trio(arr)
    return DiagnosticsRecord(
        time=float(state.time), **vals,
        a_H1=a_h1, u_H1=u_h1, theta_H1=th_h1,
        state_L2=math.sqrt(vals["a_L2"] ** 2 + vals["u_L2"] ** 2 + vals["theta_L2"] ** 2),
        state_H1=a_h1 + u_h1 + th_h1,
        udot_L2=l2(u_dot, g),
        G_L2=l2(G, g), grad_G_L2=l2(grad_G, g),
        G_W16=lp_norm(G, g, 6) + lp_norm(grad_G, g, 6),
        curl_u_L2=l2(curl_u, g), grad_curl_u_L2=l2(grad_curl, g),
        X_value=xb.value, X_ratio=xb.ratio if xb.equivalent_norm > 0 else 0.0,
        **{f"X_g{i + 1}": float(v) for i, v in enumerate(xb.groups)},
        **asdict(led), energy=led.energy, dissipation=led.dissipation,
        mass=g.integrate(state.rho), total_energy=g.integrate(state.total_energy_density),
        momentum_L1=lp_norm(state.momentum, g, 1),
        min_rho=float(state.rho.min()), max_rho=float(state.rho.max()),
        min_temp=float(state.temp.min()), max_temp=float(state.temp.max()),
        holder_a=holder_norm(a, g, alpha),
        low_freq_energy=low_freq_energy(state, state.time, freq_cfg).value,
        elliptic_res_G=res_G, elliptic_res_curl=res_c,
    )
