"""State, right-hand side and time stepping for the Navier-Stokes-Fourier system.

Strong form evolved here (heat conductivity fixed to 1, ``P = rho T``)::

    rho_t = -div(rho u)
    u_t   = -u.grad u + [mu lap u + (mu+lambda) grad div u - grad(rho T)] / rho
    T_t   = -u.grad T - T div u + [mu/2 |grad u + grad u'|^2 + lambda (div u)^2 + lap T] / rho

Time integration is an integrating-factor SSP-RK2 (Lawson/Heun): the
constant-coefficient diffusion ``mu lap u + (mu+lambda) grad div u`` and
``lap T`` (the ``1/rho`` factor frozen at 1) is propagated exactly per Fourier
mode; everything else, including the ``(1/rho - 1)`` corrections, is explicit.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import Grid

log = logging.getLogger(__name__)

DEFAULT_RHO_FLOOR = 1e-6


class NumericalAbort(RuntimeError):
    """Raised when a trajectory cannot continue; carries the last good state."""

    def __init__(self, message, last_good=None, time=None, location=None):
        super().__init__(message)
        self.last_good = last_good
        self.time = time
        self.location = location


class SingularDensityError(NumericalAbort):
    pass


class PositivityError(NumericalAbort):
    pass


@dataclass(frozen=True)
class FluidParams:
    mu: float = 1.0
    lam: float = 0.0
    cfl_safety: float = 0.5
    rho_floor: float = DEFAULT_RHO_FLOOR
    heat_only: bool = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if 2 * self.mu + 3 * self.lam < 0:
            raise ValueError(f"need 2 mu + 3 lambda >= 0, got mu={self.mu}, lambda={self.lam}")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")

    @property
    def theorem_regime(self) -> bool:
        return self.mu > 0.5 * self.lam

    @property
    def bulk(self) -> float:
        """``2 mu + lambda``, the longitudinal viscosity."""
        return 2.0 * self.mu + self.lam

    def to_dict(self) -> dict:
        return {"mu": self.mu, "lambda": self.lam, "cfl_safety": self.cfl_safety,
                "rho_floor": self.rho_floor, "heat_only": self.heat_only,
                "theorem_regime": self.theorem_regime}


@dataclass
class FluidState:
    grid: Grid
    rho: np.ndarray
    u: np.ndarray
    temp: np.ndarray
    time: float = 0.0

    @property
    def a(self) -> np.ndarray:
        return self.rho - 1.0

    @property
    def theta(self) -> np.ndarray:
        return self.temp - 1.0

    @property
    def pressure(self) -> np.ndarray:
        return self.rho * self.temp

    @property
    def momentum(self) -> np.ndarray:
        return self.rho * self.u

    @property
    def total_energy_density(self) -> np.ndarray:
        return self.rho * self.temp + 0.5 * self.rho * np.sum(self.u ** 2, axis=0)

    @property
    def e1_density(self) -> np.ndarray:
        """``rho E_1 = rho theta + |u|^2 rho / 2``."""
        return self.rho * self.theta + 0.5 * self.rho * np.sum(self.u ** 2, axis=0)

    def copy(self) -> "FluidState":
        return FluidState(self.grid, self.rho.copy(), self.u.copy(), self.temp.copy(), self.time)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.rho).all() and np.isfinite(self.u).all()
                    and np.isfinite(self.temp).all())

    @classmethod
    def equilibrium(cls, grid: Grid, time: float = 0.0) -> "FluidState":
        return cls(grid, np.ones(grid.shape), grid.zeros(vector=True), np.ones(grid.shape), time)


@dataclass
class StateDerivative:
    d_rho: np.ndarray
    d_u: np.ndarray
    d_temp: np.ndarray
    grad_u: np.ndarray = field(repr=False, default=None)
    div_u: np.ndarray = field(repr=False, default=None)
    dissipation: np.ndarray = field(repr=False, default=None)  # S(u):grad u


def _where(mask: np.ndarray) -> tuple:
    return tuple(int(i) for i in np.unravel_index(int(np.argmin(mask)), mask.shape))


def viscous_heating(grad_u: np.ndarray, div_u: np.ndarray, params: FluidParams) -> np.ndarray:
    """``S(u):grad u = mu/2 |grad u + grad u'|^2 + lambda (div u)^2``."""
    sym = grad_u + np.swapaxes(grad_u, 0, 1)
    return 0.5 * params.mu * np.sum(sym ** 2, axis=(0, 1)) + params.lam * div_u ** 2


def _rhs_spectral(state: FluidState, params: FluidParams, raw: bool = False):
    """Dealiased right-hand side in Fourier space plus cached physical fields."""
    g = state.grid
    rho, u, T = state.rho, state.u, state.temp
    if rho.min() < params.rho_floor:
        loc = _where(rho)
        raise SingularDensityError(
            f"density {rho[loc]:.3e} below floor {params.rho_floor:g} at {loc}, t={state.time:g}",
            time=state.time, location=loc)
    k = g.kderiv
    ik = 1j * k
    uh = g.fft(u)
    Th = g.fft(T)
    mask = g.dealias_mask
    kdotu = np.sum(k * uh, axis=0)
    lin_u = -params.mu * g.ksq * uh - (params.mu + params.lam) * k * kdotu
    lin_T = -g.ksq * Th

    grad_u = g.ifft(ik[None, ...] * uh[:, None, ...])
    div_u = np.trace(grad_u, axis1=0, axis2=1)
    if params.heat_only:
        zero = np.zeros(g.spectral_shape, dtype=complex)
        return (zero, lin_u * mask, lin_T * mask), (grad_u, div_u, None, uh, Th)

    grad_T = g.ifft(ik * Th)
    d_rho_h = -np.sum(ik * g.fft(rho * u), axis=0)
    viscous = g.ifft(lin_u)
    grad_P = g.ifft(ik * g.fft(rho * T))
    adv_u = np.einsum("j...,ij...->i...", u, grad_u)
    du = -adv_u + (viscous - grad_P) / rho
    heat = viscous_heating(grad_u, div_u, params)
    lap_T = g.ifft(lin_T)
    dT = -np.sum(u * grad_T, axis=0) - T * div_u + (heat + lap_T) / rho
    if raw:
        return g.ifft(d_rho_h), du, dT
    return (d_rho_h * mask, g.fft(du) * mask, g.fft(dT) * mask), (grad_u, div_u, heat, uh, Th)


def pointwise_rhs(state: FluidState, params: FluidParams):
    """``(rho_t, u_t, T_t)`` in physical space before the dealiasing filter."""
    if params.heat_only:
        raise ValueError("pointwise_rhs is defined for the full system only")
    return _rhs_spectral(state, params, raw=True)


def compute_rhs(state: FluidState, params: FluidParams) -> StateDerivative:
    (dr, du, dT), (grad_u, div_u, heat, _, _) = _rhs_spectral(state, params)
    g = state.grid
    if heat is None:
        heat = viscous_heating(grad_u, div_u, params)
    return StateDerivative(g.ifft(dr), g.ifft(du), g.ifft(dT), grad_u, div_u, heat)


def linear_propagator(grid: Grid, params: FluidParams, dt: float):
    """Exact Fourier-space factors of the frozen-coefficient diffusion over ``dt``.

    Returns ``(e_transverse, e_longitudinal, e_heat, projector)`` where the
    longitudinal projector is ``k k^T / |k|^2``.
    """
    k2 = grid.ksq
    e_t = np.exp(-params.mu * k2 * dt)
    e_l = np.exp(-params.bulk * k2 * dt)
    e_h = np.exp(-k2 * dt)
    with np.errstate(invalid="ignore", divide="ignore"):
        khat = np.where(k2 > 0, grid.kderiv / np.sqrt(np.where(k2 > 0, k2, 1.0)), 0.0)
    return e_t, e_l, e_h, khat


def _apply_linear(prop, rho_h, u_h, T_h):
    e_t, e_l, e_h, khat = prop
    long_part = khat * np.sum(khat * u_h, axis=0)
    return rho_h, e_t * (u_h - long_part) + e_l * long_part, e_h * T_h


def _explicit(state: FluidState, params: FluidParams):
    """Spectral state and the non-stiff remainder ``N(U) = RHS - L U``."""
    g = state.grid
    (dr, du, dT), (_, _, _, uh, Th) = _rhs_spectral(state, params)
    k = g.kderiv
    lin_u = -params.mu * g.ksq * uh - (params.mu + params.lam) * k * np.sum(k * uh, axis=0)
    lin_T = -g.ksq * Th
    rho_h = g.fft(state.rho)
    return (rho_h, uh, Th), (dr, du - lin_u * g.dealias_mask, dT - lin_T * g.dealias_mask)


def _from_spectral(grid, rho_h, u_h, T_h, time) -> FluidState:
    return FluidState(grid, grid.ifft(rho_h), grid.ifft(u_h), grid.ifft(T_h), time)


def step(state: FluidState, params: FluidParams, dt: float, prop=None) -> FluidState:
    """Advance by ``dt`` with the integrating-factor SSP-RK2 scheme.

    ``prop`` may carry a precomputed :func:`linear_propagator` for this ``dt``.
    Raises :class:`PositivityError` or :class:`NumericalAbort` (with the input
    state attached as ``last_good``) when the result is unusable.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    g = state.grid
    if prop is None:
        prop = linear_propagator(g, params, dt)
    try:
        U0, N0 = _explicit(state, params)
        stage = [U0[i] + dt * N0[i] for i in range(3)]
        U1 = _apply_linear(prop, *stage)
        s1 = _from_spectral(g, *U1, state.time + dt)
        _, N1 = _explicit(s1, params)
    except SingularDensityError as exc:
        exc.last_good = state
        raise
    E0 = _apply_linear(prop, *U0)
    new = [0.5 * E0[i] + 0.5 * (U1[i] + dt * N1[i]) for i in range(3)]
    out = _from_spectral(g, *new, state.time + dt)
    if params.heat_only:
        out.rho = state.rho.copy()
    if not out.is_finite():
        raise NumericalAbort(f"non-finite values after step at t={out.time:g}",
                             last_good=state, time=out.time)
    if out.rho.min() <= params.rho_floor or out.temp.min() <= 0:
        which = "density" if out.rho.min() <= params.rho_floor else "temperature"
        arr = out.rho if which == "density" else out.temp
        loc = _where(arr)
        raise PositivityError(f"{which} lost positivity ({arr[loc]:.3e}) at {loc}, t={out.time:g}",
                              last_good=state, time=out.time, location=loc)
    return out


def sound_speed(state: FluidState) -> np.ndarray:
    """Surrogate sound speed ``sqrt(2 T)`` used by the CFL bound."""
    return np.sqrt(2.0 * np.maximum(state.temp, 0.0))


def cfl_timestep(state: FluidState, params: FluidParams) -> float:
    speed = np.sqrt(np.sum(state.u ** 2, axis=0)) + sound_speed(state)
    return float(params.cfl_safety * state.grid.spacing / speed.max())


def max_wave_speed(state: FluidState) -> float:
    return float((np.sqrt(np.sum(state.u ** 2, axis=0)) + sound_speed(state)).max())


def admissible_rhs(state: FluidState, params: FluidParams):
    """Initial ``(u_t, T_t)`` assembled from the stress tensor, independently of
    :func:`compute_rhs`::

        u_t = -u.grad u + div S(u)/rho - grad(rho T)/rho
        T_t = -u.grad T - T div u + S(u):grad u / rho + lap T / rho
    """
    g = state.grid
    d = g.dim
    grad_u = np.empty((d, d) + g.shape)
    for i in range(d):
        for j in range(d):
            grad_u[i, j] = g.ifft(1j * g.kderiv[j] * g.fft(state.u[i]))
    div_u = sum(grad_u[i, i] for i in range(d))
    stress = params.mu * (grad_u + np.swapaxes(grad_u, 0, 1))
    for i in range(d):
        stress[i, i] += params.lam * div_u
    div_stress = np.array([
        sum(g.ifft(1j * g.kderiv[j] * g.fft(stress[i, j])) for j in range(d)) for i in range(d)
    ])
    grad_p = np.array([g.ifft(1j * g.kderiv[i] * g.fft(state.rho * state.temp)) for i in range(d)])
    adv = np.array([sum(state.u[j] * grad_u[i, j] for j in range(d)) for i in range(d)])
    u_t = -adv + (div_stress - grad_p) / state.rho
    grad_T = np.array([g.ifft(1j * g.kderiv[i] * g.fft(state.temp)) for i in range(d)])
    contraction = np.sum(stress * grad_u, axis=(0, 1))
    lap_T = sum(g.ifft(-g.kderiv[i] ** 2 * g.fft(state.temp)) for i in range(d))
    T_t = (-np.sum(state.u * grad_T, axis=0) - state.temp * div_u
           + (contraction + lap_T) / state.rho)
    return g.dealias(u_t), g.dealias(T_t)


def check_admissible(state0: FluidState, params: FluidParams, rhs_hook=None) -> dict:
    """Compare the initial time derivatives induced by the data with
    :func:`compute_rhs`.  ``rhs_hook`` (tests only) may alter the derivative."""
    u_t, T_t = admissible_rhs(state0, params)
    rhs = compute_rhs(state0, params)
    if rhs_hook is not None:
        rhs = rhs_hook(rhs)
    g = state0.grid

    def rel(a, b):
        scale = max(np.sqrt(g.integrate(b ** 2)), 1e-300)
        return float(np.sqrt(g.integrate((a - b) ** 2)) / scale) if np.any(b) else float(
            np.sqrt(g.integrate((a - b) ** 2)))

    return {
        "u_t_norm": float(np.sqrt(g.integrate(np.sum(u_t ** 2, axis=0)))),
        "T_t_norm": float(np.sqrt(g.integrate(T_t ** 2))),
        "residual_u": rel(rhs.d_u, u_t),
        "residual_T": rel(rhs.d_temp, T_t),
    }


def with_time(state: FluidState, time: float) -> FluidState:
    return replace(state, time=time)
