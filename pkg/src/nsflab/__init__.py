"""Pseudo-spectral laboratory for the compressible Navier-Stokes-Fourier system
on periodic boxes: solver, a priori functionals, decay fits and twin runs."""

__version__ = "0.1.0"

from .core import FluidParams, FluidState, NumericalAbort, PositivityError, compute_rhs, step  # noqa: E402
from .grid import Grid  # noqa: E402

__all__ = ["Grid", "FluidParams", "FluidState", "NumericalAbort", "PositivityError",
           "compute_rhs", "step", "__version__"]
