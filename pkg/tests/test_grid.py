import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsflab.grid import (Grid, SpectralField, ball_projector, chi_profile, fft_forward,
                         fft_inverse, inverse_lambda_gradient, lp_decompose, lp_required_range,
                         periodic_gaussian, phi_profile, spectral_curl, spectral_divergence,
                         spectral_gradient, spectral_laplacian)
from nsflab.acceptance import bernstein_worst, random_band_limited


def naive_dft(f):
    """O(n^2) forward DFT with the 1/n normalisation, 1-D."""
    n = f.size
    j = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(j, j) / n) @ f / n


@pytest.mark.parametrize("bad", [dict(dim=4, n=16, box_length=1.0),
                                 dict(dim=2, n=12, box_length=1.0),
                                 dict(dim=2, n=4, box_length=1.0),
                                 dict(dim=1, n=16, box_length=0.0)])
def test_grid_rejects_bad_shape(bad):
    with pytest.raises(ValueError):
        Grid(**bad)


def test_fft_matches_naive_dft():
    g = Grid(1, 32, 3.0)
    f = np.random.default_rng(0).standard_normal(32)
    ref = naive_dft(f)[: 32 // 2 + 1]
    np.testing.assert_allclose(g.fft(f), ref, atol=1e-14)


@pytest.mark.parametrize("dim,n", [(1, 64), (2, 32), (3, 16)])
def test_roundtrip(dim, n):
    g = Grid(dim, n, 5.0)
    f = np.random.default_rng(dim).standard_normal(g.shape)
    assert np.abs(g.ifft(g.fft(f)) - f).max() < 1e-13
    F = fft_forward(f, g)
    assert isinstance(F, SpectralField)
    np.testing.assert_allclose(fft_inverse(F), f, atol=1e-13)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_parseval(dim):
    g = Grid(dim, 16, 2.0)
    f = np.random.default_rng(1).standard_normal(g.shape)
    F = fft_forward(f, g)
    assert F.energy() == pytest.approx(np.mean(f ** 2), rel=1e-12)
    np.testing.assert_allclose(F.full_spectrum(), np.fft.fftn(f) / f.size, atol=1e-14)


def test_derivatives_of_trig_mode():
    g = Grid(2, 32, 4.0)
    x, y = g.coords
    k = 2 * math.pi / 4.0
    f = np.sin(3 * k * x) * np.cos(2 * k * y)
    grad = spectral_gradient(f, g)
    np.testing.assert_allclose(grad[0], 3 * k * np.cos(3 * k * x) * np.cos(2 * k * y), atol=1e-12)
    np.testing.assert_allclose(grad[1], -2 * k * np.sin(3 * k * x) * np.sin(2 * k * y), atol=1e-12)
    np.testing.assert_allclose(spectral_laplacian(f, g), -13 * k ** 2 * f, atol=1e-11)


def test_derivative_agrees_with_finite_differences():
    # fourth-order central differences as an independent oracle
    g = Grid(1, 256, 10.0)
    f = periodic_gaussian(g, [5.0], 1.0)
    h = g.spacing
    fd = (-np.roll(f, -2) + 8 * np.roll(f, -1) - 8 * np.roll(f, 1) + np.roll(f, 2)) / (12 * h)
    assert np.abs(spectral_gradient(f, g)[0] - fd).max() < 1e-5


def test_nyquist_not_differentiated():
    g = Grid(1, 16, 2 * math.pi)
    f = np.cos(8 * g.coords[0])  # pure Nyquist mode
    assert np.abs(spectral_gradient(f, g)).max() < 1e-13


def test_div_curl_identities():
    g = Grid(3, 16, 2 * math.pi)
    rng = np.random.default_rng(3)
    phi = g.dealias(rng.standard_normal(g.shape))
    grad = spectral_gradient(phi, g)
    assert np.abs(spectral_curl(grad, g)).max() < 1e-11
    v = np.array([g.dealias(rng.standard_normal(g.shape)) for _ in range(3)])
    assert np.abs(spectral_divergence(spectral_curl(v, g), g)).max() < 1e-11


def test_curl_in_one_dimension_is_zero():
    g = Grid(1, 16, 1.0)
    assert not spectral_curl(np.ones((1, 16)), g).any()


def test_inverse_lambda_gradient_flags_mean():
    g = Grid(2, 16, 2 * math.pi)
    x, _ = g.coords
    v, removed = inverse_lambda_gradient(np.cos(2 * x), g)
    assert not removed
    # i xi/|xi| applied to cos(2x) gives -sin(2x) in the first component
    np.testing.assert_allclose(v[0], -np.sin(2 * x), atol=1e-13)
    _, removed = inverse_lambda_gradient(np.cos(2 * x) + 1.0, g)
    assert removed


def test_chi_phi_profiles():
    r = np.linspace(0, 4, 401)
    chi = chi_profile(r)
    assert np.all(chi[r <= 0.75] == 1.0)
    assert np.all(chi[r >= 4 / 3] == 0.0)
    assert np.all(np.diff(chi) <= 0)
    phi = phi_profile(r)
    assert np.all(phi[(r < 0.75) | (r > 8 / 3)] == 0.0)
    assert np.all(phi >= 0)


@given(r=st.floats(min_value=1e-3, max_value=1e3))
def test_dyadic_partition_of_unity(r):
    js = np.arange(-15, 15)
    total = np.sum(phi_profile(r * 2.0 ** -js)) + chi_profile(r * 2.0 ** 15)
    assert total == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("dim,n", [(1, 128), (2, 64), (3, 16)])
def test_lp_reconstruction(dim, n):
    g = Grid(dim, n, 2 * math.pi)
    f = np.random.default_rng(dim).standard_normal(g.shape) + 0.5
    lp = lp_decompose(f, g)
    assert np.abs(lp.reconstruct() - f).max() < 1e-10
    j_lo, _ = lp_required_range(g)
    assert lp.block(j_lo) is lp.blocks[0][1]


def test_lp_rejects_short_range():
    g = Grid(2, 32, 2 * math.pi)
    _, j_hi = lp_required_range(g)
    with pytest.raises(ValueError, match="does not cover"):
        lp_decompose(np.zeros(g.shape), g, j_max=j_hi - 1)


def test_bernstein_constant():
    assert bernstein_worst(Grid(2, 64, 2 * math.pi), seeds=range(5)) <= 2.0


def test_ball_projector():
    g = Grid(2, 32, 2 * math.pi)
    f = np.random.default_rng(4).standard_normal(g.shape)
    F = fft_forward(f, g)
    P = ball_projector(F, 3.0)
    assert np.all(P.coefficients[g.wavenumber > 3.0] == 0)
    assert P.energy() <= F.energy()
    with pytest.raises(ValueError):
        ball_projector(F, -1.0)


def test_periodic_gaussian_is_smooth_and_peaked():
    g = Grid(1, 128, 10.0)
    f = periodic_gaussian(g, [0.0], 2.0)
    assert f[0] == pytest.approx(1.0 + 2 * math.exp(-100 / 8), rel=1e-6)
    # spectrum decays to round-off: no kink at the box boundary
    assert np.abs(g.fft(f))[-10:].max() < 1e-14
    with pytest.raises(ValueError):
        periodic_gaussian(g, [0.0], 0.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_band_limited_fields_are_real_and_bounded(seed):
    g = Grid(2, 32, 2 * math.pi)
    f = random_band_limited(g, seed)
    assert np.isfinite(f).all()
    assert 0.01 - 1e-12 <= np.abs(f).max() <= 0.5 + 1e-12
    assert abs(f.mean()) < 1e-14
