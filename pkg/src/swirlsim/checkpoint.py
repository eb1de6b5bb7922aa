"""Versioned binary checkpoints with bit-exact round-trip.

Layout: magic "SWRLCKPT", u32 version, i32 dims[3], f64 h, f64 t, f64 dt_prev,
i64 step, then the FlowState field arrays (row-major float64, in
FlowState.FIELD_NAMES order). Previous-level velocity and face fluxes are
included so a multistep restart reproduces the original run bit-for-bit.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import (
    CheckpointDimensionError,
    CheckpointFormatError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from .state import FlowState

MAGIC = b"SWRLCKPT"
VERSION = 1
_HEADER = struct.Struct("<8sI3i3dq")


def write_checkpoint(state: FlowState, path, h: float = 0.0) -> None:
    dims = state.dims
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, dims[0], dims[1], dims[2],
                             h, state.t, state.dt_prev, state.step))
        for name in FlowState.FIELD_NAMES:
            arr = np.ascontiguousarray(getattr(state, name), dtype="<f8")
            f.write(arr.tobytes())


def read_checkpoint(path, expected_dims=None) -> FlowState:
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise CheckpointTruncatedError(f"{path}: header truncated")
        magic, version, nx, ny, nz, h, t, dt_prev, step = _HEADER.unpack(head)
        if magic != MAGIC:
            raise CheckpointFormatError(f"{path}: not a swirlsim checkpoint")
        if version != VERSION:
            raise CheckpointVersionError(
                f"{path}: layout version {version} not supported (expected {VERSION})"
            )
        dims = (nx, ny, nz)
        if min(dims) <= 0:
            raise CheckpointFormatError(f"{path}: invalid dims {dims}")
        if expected_dims is not None and tuple(expected_dims) != dims:
            raise CheckpointDimensionError(
                f"{path}: checkpoint dims {dims} do not match mesh dims "
                f"{tuple(expected_dims)}"
            )
        state = FlowState(dims, t=t)
        state.dt_prev = dt_prev
        state.step = step
        count = nx * ny * nz
        nbytes = count * 8
        for name in FlowState.FIELD_NAMES:
            raw = f.read(nbytes)
            if len(raw) < nbytes:
                raise CheckpointTruncatedError(
                    f"{path}: field {name!r} truncated "
                    f"({len(raw)} of {nbytes} bytes)"
                )
            getattr(state, name)[...] = np.frombuffer(
                raw, dtype="<f8").reshape(dims)
    state.meta_h = h
    return state
