"""Worked examples checked against independent oracles (closed forms, brute-force
sums, finite differences, linearised dynamics)."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from nsflab.core import (FluidParams, FluidState, cfl_timestep, compute_rhs, linear_propagator,
                         step)
from nsflab.experiments import Scenario, build_initial_state, twin_stability_run
from nsflab.freq import FreqSplitConfig, fit_decay, low_freq_energy, spectral_measure
from nsflab.functionals import (elliptic_flux_residual, energy_identity_terms,
                                holder_norm, holder_shell_part, material_derivatives,
                                random_bump_state, velocity_control_check)
from nsflab.grid import (Grid, fft_forward, inverse_lambda_gradient, lp_decompose,
                         periodic_gaussian, phi_profile, spectral_laplacian)
from nsflab.acceptance import random_band_limited


def test_sine_has_two_conjugate_coefficients():
    g = Grid(1, 16, 3.0)
    f = np.sin(2 * np.pi * g.coords[0] / 3.0)
    full = fft_forward(f, g).full_spectrum()
    nonzero = np.flatnonzero(np.abs(full) > 1e-14)
    assert list(nonzero) == [1, 15]
    assert full[1] == pytest.approx(-0.5j) and full[15] == pytest.approx(0.5j)


def test_laplacian_fourth_order_fd_oracle():
    # the FD error shrinks as h^4 towards the spectral value
    errs = []
    for n in (64, 128):
        g = Grid(1, n, 10.0)
        f = periodic_gaussian(g, [5.0], 1.2)
        h = g.spacing
        fd = (-np.roll(f, 2) + 16 * np.roll(f, 1) - 30 * f + 16 * np.roll(f, -1)
              - np.roll(f, -2)) / (12 * h * h)
        errs.append(np.abs(spectral_laplacian(f, g) - fd).max())
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.1)


def test_inverse_lambda_gradient_per_mode():
    g = Grid(2, 16, 2 * math.pi)
    f = g.dealias(np.random.default_rng(3).standard_normal(g.shape))
    f -= f.mean()
    v, removed = inverse_lambda_gradient(f, g)
    assert not removed
    # apply i xi/|xi| one Fourier mode at a time
    fh = np.fft.fft2(f)
    m = np.fft.fftfreq(16, 1 / 16)
    kx, ky = np.meshgrid(m, m, indexing="ij")
    kk = np.hypot(kx, ky)
    out = np.zeros((2, 16, 16))
    for i, j in np.ndindex(16, 16):
        if kk[i, j] == 0:
            continue
        e = np.zeros((16, 16), complex)
        e[i, j] = fh[i, j]
        mode = np.fft.ifft2(e)
        out[0] += (1j * kx[i, j] / kk[i, j] * mode).real
        out[1] += (1j * ky[i, j] / kk[i, j] * mode).real
    np.testing.assert_allclose(v, out, atol=1e-13)


@pytest.mark.parametrize("j0", [2, 3, 4])
def test_single_mode_lands_in_neighbouring_shells(j0):
    g = Grid(1, 128, 2 * math.pi)
    f = np.cos(2 ** j0 * g.coords[0])
    lp = lp_decompose(f, g)
    near = sum(b for j, b in lp.blocks if j0 - 1 <= j <= j0 + 1)
    assert np.sum(near ** 2) >= 0.99 * np.sum(f ** 2)
    far = sum(np.sum(b ** 2) for j, b in lp.blocks if not j0 - 1 <= j <= j0 + 1)
    assert far < 1e-20


@pytest.mark.parametrize("radius", [1.5, 2.7, 4.2])
def test_low_freq_energy_brute_force(radius):
    g = Grid(2, 16, 2 * math.pi)
    s = random_bump_state(g, np.random.default_rng(1), 0.1, (0.5, 1.5))
    cfg = FreqSplitConfig(radius)
    value = low_freq_energy(s, 0.0, cfg).value
    rho_e1 = s.rho * s.theta + 0.5 * s.rho * np.sum(s.u ** 2, axis=0)
    total = 0.0
    for field in (s.a, s.momentum[0], s.momentum[1], rho_e1):
        c = np.fft.fft2(field) / field.size
        m = np.fft.fftfreq(16, 1 / 16)
        kx, ky = np.meshgrid(m, m, indexing="ij")
        total += np.sum(np.abs(c[np.hypot(kx, ky) <= radius]) ** 2)
    assert value == pytest.approx(spectral_measure(g) * total, rel=1e-12)


def test_conservative_momentum_derivative():
    # rho u_t + u rho_t = -div(rho u u) - grad P + div S(u)
    g = Grid(2, 64, 16.0)
    s = random_bump_state(g, np.random.default_rng(2), 0.1, (2.0, 4.0))
    p = FluidParams(mu=1.0, lam=0.4)
    rhs = compute_rhs(s, p)
    lhs = s.rho * rhs.d_u + s.u * rhs.d_rho

    def d(f, j):
        return g.ifft(1j * g.kderiv[j] * g.fft(f))

    grad_u = np.array([[d(s.u[i], j) for j in range(2)] for i in range(2)])
    div_u = grad_u[0, 0] + grad_u[1, 1]
    stress = p.mu * (grad_u + grad_u.transpose(1, 0, 2, 3)) + p.lam * div_u * np.eye(2)[
        :, :, None, None]
    flux = s.rho * s.u[:, None] * s.u[None, :]
    rhs2 = np.array([sum(d(stress[i, j] - flux[i, j], j) for j in range(2)) - d(s.pressure, i)
                     for i in range(2)])
    assert np.abs(g.dealias(lhs[0]) - g.dealias(rhs2[0])).max() < 1e-9 * np.abs(rhs2).max()


def test_linearised_acoustic_mode_over_ten_periods():
    # 3-D, oblique wavevector: 5x5 symbol of the linearisation at (1, 0, 1)
    L, n, mu, lam = 20 * math.pi, 8, 0.01, 0.02
    g = Grid(3, n, L)
    p = FluidParams(mu=mu, lam=lam)
    m = np.array([1, 1, 0])
    k = 2 * math.pi / L * m
    kk = k @ k
    sym = np.zeros((5, 5), complex)
    sym[0, 1:4] = -1j * k
    sym[1:4, 0] = -1j * k
    sym[1:4, 4] = -1j * k
    sym[1:4, 1:4] = -mu * kk * np.eye(3) - (mu + lam) * np.outer(k, k)
    sym[4, 1:4] = -1j * k
    sym[4, 4] = -kk
    eps = 1e-6
    phase = np.tensordot(k, g.coords, axes=1)
    s = FluidState(g, 1 + eps * np.cos(phase), g.zeros(vector=True), np.ones(g.shape))
    omega = max(np.abs(np.linalg.eigvals(sym).imag))
    t_end = 10 * 2 * math.pi / omega
    nsteps = int(math.ceil(t_end / 0.1))
    dt = t_end / nsteps
    prop = linear_propagator(g, p, dt)
    for _ in range(nsteps):
        s = step(s, p, dt, prop)
    mi = g.mode_indices
    idx = tuple(np.argwhere((mi[0] == 1) & (mi[1] == 1) & (mi[2] == 0))[0])
    got = np.array([g.fft(f)[idx] for f in (s.a, *s.u, s.theta)])
    want = expm(sym * t_end) @ np.array([eps / 2, 0, 0, 0, 0])
    assert np.linalg.norm(got - want) <= 0.01 * np.linalg.norm(want)


def test_cfl_dominated_by_supersonic_pocket():
    g = Grid(2, 32, 8.0)
    s = FluidState.equilibrium(g)
    s.u[0, 5, 7] = 10.0
    p = FluidParams()
    assert cfl_timestep(s, p) == pytest.approx(0.5 * g.spacing / (10 + math.sqrt(2)))


@pytest.mark.parametrize("eps", [1e-2, 1e-3])
def test_entropy_density_of_density_mode(eps):
    g = Grid(2, 32, 2 * math.pi)
    mode = np.cos(g.coords[0] + 2 * g.coords[1])
    s = FluidState(g, 1 + eps * mode, g.zeros(vector=True), np.ones(g.shape))
    led = energy_identity_terms(s, FluidParams())
    taylor = 0.5 * eps ** 2 * g.integrate(mode ** 2)
    assert led.entropy_density_int == pytest.approx(taylor, rel=2 * eps ** 2)


def test_dissipation_of_divergence_free_mode():
    # for div u = 0: mu/2 int |grad u + grad u'|^2 = mu int |grad u|^2
    g = Grid(2, 32, 2 * math.pi)
    x, y = g.coords
    u = 0.1 * np.array([np.sin(y) * np.cos(x), -np.cos(y) * np.sin(x)])
    s = FluidState(g, np.ones(g.shape), u, np.ones(g.shape))
    mu = 0.4
    led = energy_identity_terms(s, FluidParams(mu=mu, lam=1.0))
    grad = compute_rhs(s, FluidParams(mu=mu)).grad_u
    assert led.dissipation_T == pytest.approx(mu * g.integrate(np.sum(grad ** 2, axis=(0, 1))),
                                              rel=1e-12)


def test_material_derivative_under_uniform_transport():
    g = Grid(2, 32, 2 * math.pi)
    x, y = g.coords
    th = 0.01 * np.cos(x + y)
    s = FluidState(g, np.ones(g.shape), np.array([0.3 * np.ones(g.shape), -0.2 * np.ones(g.shape)]),
                   1 + th)
    _, th_dot = material_derivatives(s, FluidParams())
    np.testing.assert_allclose(th_dot, -2 * th, atol=1e-15)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 1000))
def test_elliptic_identities_on_smooth_states(seed):
    g = Grid(2, 64, 16.0)
    rng = np.random.default_rng(seed)
    s = random_bump_state(g, rng, 0.05, (16 / 6, 16 / 4))
    res_G, res_c = elliptic_flux_residual(s, FluidParams(mu=1.0, lam=0.3))
    assert res_G < 1e-8 and res_c < 1e-8


@pytest.mark.parametrize("j0", [2, 3])
def test_holder_shell_part_of_single_mode(j0):
    g = Grid(1, 128, 2 * math.pi)
    f = np.cos(2 ** j0 * g.coords[0])
    alpha = 0.5
    # the mode is split between shells j0 (weight phi(1)) and j0 - 1 (weight phi(2))
    expected = max(2 ** (j0 * alpha) * phi_profile(1.0), 2 ** ((j0 - 1) * alpha) * phi_profile(2.0))
    assert holder_shell_part(f, g, alpha) == pytest.approx(expected, rel=1e-12)
    assert phi_profile(1.0) + phi_profile(2.0) == pytest.approx(1.0)


def test_holder_norm_nondecreasing_in_alpha():
    g = Grid(2, 32, 2 * math.pi)
    f = random_band_limited(g, 7)
    vals = [holder_norm(f, g, a) for a in np.linspace(0.05, 0.95, 10)]
    assert np.all(np.diff(vals) >= 0)


def test_velocity_control_constant_stable_under_refinement():
    consts = []
    for n in (32, 64):
        g = Grid(2, n, 16.0)
        s = random_bump_state(g, np.random.default_rng(4), 0.05, (2.5, 4.0))
        rep = velocity_control_check(s, FluidParams())
        consts.append(np.array([v["constant"] for v in rep.values()]))
    np.testing.assert_allclose(consts[0], consts[1], rtol=1e-3)


@pytest.mark.parametrize("dim,width", [(1, 3.0), (2, 3.0)])
def test_heat_kernel_exponent_approaches_rate(dim, width):
    # whole-space L2 norm of the heat-evolved Gaussian, closed form
    t = np.linspace(0, 2000, 4001)
    norm = (1 + 2 * t / width ** 2) ** (-dim / 4)
    short = fit_decay(t, norm, (1.0, 10.0)).exponent
    long = fit_decay(t, norm, (200.0, 2000.0)).exponent
    assert abs(long + dim / 4) < abs(short + dim / 4)
    assert long == pytest.approx(-dim / 4, abs=0.01)


def test_bump_initial_state_floor_and_mean():
    sc = Scenario.from_dict(dict(kind="small_perturbation", dim=2, n=64, L=16.0, t_end=1.0,
                                 sample_dt=0.5, weights={},
                                 bumps=[dict(type="bump", field="a", amplitude=-0.1,
                                             center=[8, 8], width=2.0)]))
    s, info = build_initial_state(sc)
    assert info["min_rho0"] >= 0.9
    assert abs(s.a.mean()) < 1e-15
    sc.bumps[0].amplitude = 0.1
    _, info = build_initial_state(sc)
    assert 1.0 <= max(info["max_rho0"], info["max_T0"]) <= 1.1


def test_heat_only_twin_distance_contracts():
    sc = Scenario.from_dict(dict(kind="heat_only", dim=2, n=32, L=16.0, t_end=4.0, sample_dt=0.5,
                                 epsilon=[1e-3], weights={}))
    rep = twin_stability_run(sc)
    dist = rep["runs"][0]["distance"]
    assert np.all(np.diff(dist) <= 0)


def test_heat_step_matches_exponential_factor():
    g = Grid(1, 32, 2 * math.pi)
    x = g.coords[0]
    s = FluidState(g, np.ones(32), np.zeros((1, 32)), 1 + 1e-3 * np.cos(3 * x))
    for dt in (1e-2, 1e-3):
        out = step(s, FluidParams(heat_only=True), dt)
        np.testing.assert_allclose(out.theta, s.theta * math.exp(-9 * dt), atol=1e-16)
