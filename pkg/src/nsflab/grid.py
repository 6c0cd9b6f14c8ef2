"""Periodic lattices, Fourier transforms and spectral operators.

Every field in the package is a plain ``numpy`` array laid out as
``grid.shape`` (scalars) or ``(dim,) + grid.shape`` (vectors).  Transforms use
the real-to-complex layout of :func:`scipy.fft.rfftn` with ``norm="forward"``,
so stored coefficients are Fourier-series amplitudes ``c_m`` with
``f(x) = sum_m c_m exp(i k_m . x)`` and ``k_m = 2 pi m / L``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "SpectralField",
    "LPBlockSet",
    "fft_forward",
    "fft_inverse",
    "spectral_gradient",
    "spectral_divergence",
    "spectral_curl",
    "spectral_laplacian",
    "inverse_lambda_gradient",
    "chi_profile",
    "phi_profile",
    "lp_decompose",
    "ball_projector",
    "set_workers",
]

_WORKERS = 1


def set_workers(n: int) -> None:
    """Number of threads handed to scipy's FFT backend."""
    global _WORKERS
    _WORKERS = max(1, int(n))


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice on ``[0, L)^dim`` with ``n`` points per axis."""

    dim: int
    n: int
    box_length: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not self.box_length > 0:
            raise ValueError(f"box_length must be positive, got {self.box_length}")

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def spectral_shape(self) -> tuple:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    @property
    def volume(self) -> float:
        return self.box_length ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def axes(self) -> tuple:
        return tuple(range(-self.dim, 0))

    @cached_property
    def coords(self) -> np.ndarray:
        """Lattice point coordinates, shape ``(dim,) + shape``."""
        x = np.arange(self.n) * self.spacing
        return np.array(np.meshgrid(*([x] * self.dim), indexing="ij"))

    @cached_property
    def mode_indices(self) -> np.ndarray:
        """Integer mode numbers ``m`` in the rfft layout, shape ``(dim,) + spectral_shape``."""
        full = np.fft.fftfreq(self.n, 1.0 / self.n)
        half = np.arange(self.n // 2 + 1, dtype=float)
        axes = [full] * (self.dim - 1) + [half]
        return np.array(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def wavevector(self) -> np.ndarray:
        """Physical wavevectors ``2 pi m / L`` (Nyquist kept, as ``-pi/dx``)."""
        m = self.mode_indices.copy()
        # fftfreq already maps n/2 to -n/2 on the full axes; the rfft axis keeps +n/2
        return 2.0 * np.pi / self.box_length * m

    @cached_property
    def wavenumber(self) -> np.ndarray:
        """``|xi|`` on the rfft layout."""
        return np.sqrt(np.sum(self.wavevector ** 2, axis=0))

    @cached_property
    def kderiv(self) -> np.ndarray:
        """Wavevectors used for differentiation: the Nyquist plane is zeroed."""
        k = self.wavevector.copy()
        nyq = np.abs(self.mode_indices) == self.n // 2
        k[nyq] = 0.0
        return k

    @cached_property
    def ksq(self) -> np.ndarray:
        return np.sum(self.kderiv ** 2, axis=0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep modes with every ``|m_i| < n/3``."""
        return np.all(np.abs(self.mode_indices) < self.n / 3.0, axis=0)

    @cached_property
    def parseval_weight(self) -> np.ndarray:
        """Multiplicity of each rfft coefficient in the full spectrum (1 or 2)."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0
        return w

    @property
    def k_min(self) -> float:
        return 2.0 * np.pi / self.box_length

    @property
    def k_max(self) -> float:
        """Largest ``|xi|`` present on the lattice (corner Nyquist mode)."""
        return math.sqrt(self.dim) * np.pi / self.spacing

    # raw transforms on arrays; vector arrays carry a leading component axis
    def fft(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f, axes=self.axes, norm="forward", workers=_WORKERS)

    def ifft(self, F: np.ndarray) -> np.ndarray:
        return sfft.irfftn(F, s=self.shape, axes=self.axes, norm="forward", workers=_WORKERS)

    def dealias(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(self.fft(f) * self.dealias_mask)

    def integrate(self, f: np.ndarray) -> float:
        """Lattice quadrature ``sum f * dx^d`` (spectrally accurate on the torus)."""
        return float(np.sum(f) * self.cell_volume)

    def zeros(self, vector: bool = False) -> np.ndarray:
        shape = ((self.dim,) if vector else ()) + self.shape
        return np.zeros(shape)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "n": self.n, "L": self.box_length}


@dataclass
class SpectralField:
    """Fourier amplitudes of a real field on ``grid`` (rfft half-spectrum layout)."""

    grid: Grid
    coefficients: np.ndarray

    def energy(self) -> float:
        """``sum over the full spectrum of |c_m|^2`` (= mean square of the field)."""
        c2 = np.abs(self.coefficients) ** 2
        if c2.ndim > self.grid.dim:
            c2 = c2.sum(axis=0)
        return float(np.sum(self.grid.parseval_weight * c2))

    def full_spectrum(self) -> np.ndarray:
        """Complex ``fftn`` amplitudes over every wavevector, for symmetry checks."""
        f = fft_inverse(self)
        return np.fft.fftn(f, axes=self.grid.axes) / self.grid.n ** self.grid.dim


def _check_finite(f: np.ndarray) -> None:
    bad = ~np.isfinite(f)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"non-finite value {f[idx]!r} at index {idx}")


def fft_forward(f: np.ndarray, grid: Grid) -> SpectralField:
    f = np.asarray(f, dtype=float)
    if f.shape[-grid.dim:] != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    _check_finite(f)
    return SpectralField(grid, grid.fft(f))


def fft_inverse(F: SpectralField) -> np.ndarray:
    return F.grid.ifft(F.coefficients)


def spectral_gradient(f: np.ndarray, grid: Grid) -> np.ndarray:
    """``grad f``; for a vector input returns ``out[i, j] = d_j f_i``."""
    fh = grid.fft(f)
    ik = 1j * grid.kderiv
    if f.ndim == grid.dim:
        return grid.ifft(ik * fh)
    return grid.ifft(ik[None, ...] * fh[:, None, ...])


def spectral_divergence(v: np.ndarray, grid: Grid) -> np.ndarray:
    vh = grid.fft(v)
    return grid.ifft(np.sum(1j * grid.kderiv * vh, axis=0))


def spectral_curl(v: np.ndarray, grid: Grid) -> np.ndarray:
    """Curl: scalar vorticity in 2-D, vector in 3-D, zero in 1-D."""
    if grid.dim == 1:
        return np.zeros(grid.shape)
    vh = grid.fft(v)
    k = grid.kderiv
    if grid.dim == 2:
        return grid.ifft(1j * (k[0] * vh[1] - k[1] * vh[0]))
    return grid.ifft(1j * np.array([
        k[1] * vh[2] - k[2] * vh[1],
        k[2] * vh[0] - k[0] * vh[2],
        k[0] * vh[1] - k[1] * vh[0],
    ]))


def spectral_laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    return grid.ifft(-grid.ksq * grid.fft(f))


def inverse_lambda_gradient(f: np.ndarray, grid: Grid):
    """Apply the multiplier ``i xi / |xi|`` (``xi = 0`` mapped to 0).

    Returns ``(vector_field, mean_removed)``; ``mean_removed`` is True when the
    input had a nonzero mean that the multiplier discarded.
    """
    fh = grid.fft(f)
    mean = fh[(0,) * grid.dim]
    mean_removed = bool(abs(mean) > 1e-14 * max(1.0, float(np.max(np.abs(f)))))
    knorm = np.sqrt(grid.ksq)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(knorm > 0, grid.kderiv / np.where(knorm > 0, knorm, 1.0), 0.0)
    return grid.ifft(1j * unit * fh), mean_removed


# --- Littlewood-Paley machinery -------------------------------------------------
#
# chi(r) = psi((4/3 - r) / (7/12)),  psi(x) = h(x) / (h(x) + h(1 - x)),
# h(x) = exp(-1/x) for x > 0 and 0 otherwise.
# h is the building block of the exp(-1/(1 - r^2)) mollifier; chi is C^inf,
# non-increasing, equal to 1 on |xi| <= 3/4 and 0 on |xi| >= 4/3.
# phi(r) = chi(r/2) - chi(r) is supported in 3/4 <= r <= 8/3.
_CHI_INNER = 0.75
_CHI_OUTER = 4.0 / 3.0


def _h(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def chi_profile(r) -> np.ndarray:
    x = (_CHI_OUTER - np.asarray(r, dtype=float)) / (_CHI_OUTER - _CHI_INNER)
    x = np.clip(x, 0.0, 1.0)
    a, b = _h(x), _h(1.0 - x)
    return a / (a + b)


def phi_profile(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return chi_profile(r / 2.0) - chi_profile(r)


def lp_required_range(grid: Grid) -> tuple:
    """Shell indices ``(j_lo, j_hi)`` touching nonzero lattice frequencies."""
    j_lo = math.floor(math.log2(grid.k_min * 3.0 / 8.0)) + 1
    j_hi = math.ceil(math.log2(grid.k_max / _CHI_INNER)) - 1
    return j_lo, j_hi


@dataclass
class LPBlockSet:
    """Dyadic shells ``Delta_j f`` for ``j_min <= j <= j_max`` plus the low remainder."""

    grid: Grid
    j_min: int
    j_max: int
    blocks: list
    low: np.ndarray
    occupancy: dict

    def reconstruct(self) -> np.ndarray:
        out = self.low.copy()
        for _, b in self.blocks:
            out += b
        return out

    def block(self, j: int) -> np.ndarray:
        return self.blocks[j - self.j_min][1]


def lp_decompose(f: np.ndarray, grid: Grid, j_min: int | None = None,
                 j_max: int | None = None) -> LPBlockSet:
    """Homogeneous Littlewood-Paley split ``f = S_{j_min} f + sum_j Delta_j f``.

    Shells below ``j_min`` are gathered in ``low`` (which also holds the mean);
    ``j_max`` must reach the top of the lattice spectrum.
    """
    j_lo, j_hi = lp_required_range(grid)
    j_min = j_lo if j_min is None else int(j_min)
    j_max = j_hi if j_max is None else int(j_max)
    if j_max < j_hi or j_min > j_max:
        raise ValueError(
            f"shell range [{j_min}, {j_max}] does not cover the lattice spectrum; "
            f"need j_max >= {j_hi} (nonzero frequencies occupy shells {j_lo}..{j_hi})")
    fh = grid.fft(f)
    r = grid.wavenumber
    blocks, occupancy = [], {}
    for j in range(j_min, j_max + 1):
        w = phi_profile(r * 2.0 ** (-j))
        occupancy[j] = int(np.sum(grid.parseval_weight[w > 0]))
        blocks.append((j, grid.ifft(w * fh)))
    low = grid.ifft(chi_profile(r * 2.0 ** (-j_min)) * fh)
    return LPBlockSet(grid, j_min, j_max, blocks, low, occupancy)


def ball_projector(F: SpectralField, radius: float) -> SpectralField:
    """Zero every coefficient with ``|xi| > radius``."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    keep = F.grid.wavenumber <= radius
    return SpectralField(F.grid, F.coefficients * keep)


def periodic_gaussian(grid: Grid, center, width: float) -> np.ndarray:
    """Gaussian ``exp(-|x - c|^2 / (2 w^2))`` summed over enough periodic images
    to be smooth across the box boundary (to double precision)."""
    if width <= 0:
        raise ValueError("width must be positive")
    L = grid.box_length
    c = np.asarray(center, dtype=float).reshape(grid.dim)
    m = int(math.ceil(9.0 * width / L)) + 1
    out = np.ones(grid.shape)
    # separable: product of 1-D wrapped Gaussians
    for ax in range(grid.dim):
        x = np.arange(grid.n) * grid.spacing
        d = x - c[ax]
        d -= L * np.round(d / L)
        prof = np.zeros_like(x)
        for img in range(-m, m + 1):
            prof += np.exp(-(d + img * L) ** 2 / (2.0 * width ** 2))
        shape = [1] * grid.dim
        shape[ax] = grid.n
        out = out * prof.reshape(shape)
    return out
