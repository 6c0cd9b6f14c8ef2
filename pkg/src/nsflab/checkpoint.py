"""Binary checkpoint format.

Layout (all little-endian)::

    magic    4 bytes  b"NSF1"
    version  uint32   1
    dim      int64
    n        int64
    L        float64
    time     float64
    mu       float64
    lambda   float64
    payload  float64[(dim + 2) * n**dim]   rho, u_0 .. u_{d-1}, T, each row-major
"""
from __future__ import annotations

import struct

import numpy as np

from .core import FluidParams, FluidState
from .grid import Grid

MAGIC = b"NSF1"
VERSION = 1
_HEADER = struct.Struct("<4sIqqdddd")


class CheckpointError(ValueError):
    """Malformed, truncated or incompatible checkpoint."""


def encode_checkpoint(state: FluidState, params: FluidParams) -> bytes:
    g = state.grid
    head = _HEADER.pack(MAGIC, VERSION, g.dim, g.n, g.box_length, float(state.time),
                        params.mu, params.lam)
    fields = np.concatenate([state.rho[None], state.u, state.temp[None]], axis=0)
    return head + np.ascontiguousarray(fields, dtype="<f8").tobytes(order="C")


def decode_checkpoint(blob: bytes):
    """Return ``(state, mu, lam)``; raise :class:`CheckpointError` on any defect."""
    if len(blob) < _HEADER.size:
        raise CheckpointError(f"truncated header: {len(blob)} < {_HEADER.size} bytes")
    magic, version, dim, n, L, time, mu, lam = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    try:
        grid = Grid(int(dim), int(n), float(L))
    except ValueError as exc:
        raise CheckpointError(f"invalid grid in header: {exc}") from None
    count = (dim + 2) * n ** dim
    expected = _HEADER.size + 8 * count
    if len(blob) != expected:
        raise CheckpointError(f"payload length mismatch: {len(blob)} bytes, expected {expected}")
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size).astype(float)
    fields = data.reshape((dim + 2,) + grid.shape)
    state = FluidState(grid, fields[0].copy(), fields[1:dim + 1].copy(), fields[-1].copy(),
                       float(time))
    return state, float(mu), float(lam)


def write_checkpoint(path, state: FluidState, params: FluidParams) -> str:
    from .io import write_atomic

    return write_atomic(path, encode_checkpoint(state, params))


def read_checkpoint(path):
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
