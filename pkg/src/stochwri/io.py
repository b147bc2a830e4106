"""Binary and CSV formats for models, wavefields and shot records.

Model record: ``b"WARI"``, u32 nx, u32 nz, f64 dx, f64 dz, f64 x0, f64 z0,
then ``nx*nz`` little-endian f64 values with z varying fastest.

Wavefield file: a sequence of model records, two per block (real part, then
imaginary part).

Shot record: ``b"WARI"``, u32 n_r, u32 n_s, f64 frequency, then
``n_r*n_s`` interleaved (re, im) little-endian f64 pairs, receiver fastest.
"""
from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .grid_model import Grid2D

MAGIC = b"WARI"
_MODEL_HEADER = struct.Struct("<4sIIdddd")
_SHOT_HEADER = struct.Struct("<4sIId")


class FormatError(ValueError):
    pass


def _model_bytes(grid: Grid2D, values: np.ndarray) -> bytes:
    values = np.asarray(values, dtype=np.float64).reshape(grid.shape)
    head = _MODEL_HEADER.pack(MAGIC, grid.nx, grid.nz, grid.dx, grid.dz, *grid.origin)
    return head + values.astype("<f8").tobytes(order="C")


def _parse_model(buf: bytes, offset: int = 0):
    if len(buf) - offset < _MODEL_HEADER.size:
        raise FormatError("truncated model header")
    magic, nx, nz, dx, dz, x0, z0 = _MODEL_HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    start = offset + _MODEL_HEADER.size
    end = start + 8 * nx * nz
    if len(buf) < end:
        raise FormatError("truncated model body")
    grid = Grid2D(nx, nz, dx, dz, (x0, z0))
    values = np.frombuffer(buf[start:end], dtype="<f8").reshape(nx, nz).astype(np.float64)
    return grid, values, end


def write_model(path, grid: Grid2D, values: np.ndarray):
    Path(path).write_bytes(_model_bytes(grid, values))


def read_model(path) -> tuple[Grid2D, np.ndarray]:
    buf = Path(path).read_bytes()
    grid, values, end = _parse_model(buf)
    if end != len(buf):
        raise FormatError("trailing bytes after model record")
    return grid, values


def write_model_csv(path, grid: Grid2D, values: np.ndarray):
    values = np.asarray(values).reshape(grid.shape)
    X, Z = grid.mesh()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "z", "value"])
        for x, z, v in zip(X.ravel(), Z.ravel(), values.ravel()):
            w.writerow([repr(float(x)), repr(float(z)), repr(float(v))])


def write_wavefield(path, grid: Grid2D, u: np.ndarray):
    u = np.asarray(u).reshape(grid.size, -1)
    parts = []
    for b in range(u.shape[1]):
        parts.append(_model_bytes(grid, u[:, b].real))
        parts.append(_model_bytes(grid, u[:, b].imag))
    Path(path).write_bytes(b"".join(parts))


def read_wavefield(path) -> tuple[Grid2D, np.ndarray]:
    buf = Path(path).read_bytes()
    offset, blocks, grid = 0, [], None
    while offset < len(buf):
        g_re, re, offset = _parse_model(buf, offset)
        g_im, im, offset = _parse_model(buf, offset)
        if g_re != g_im or (grid is not None and g_re != grid):
            raise FormatError("inconsistent grids between wavefield sections")
        grid = g_re
        blocks.append((re + 1j * im).ravel())
    if grid is None:
        raise FormatError("empty wavefield file")
    return grid, np.column_stack(blocks)


def write_shot_data(path, d: np.ndarray, frequency: float):
    d = np.asarray(d, dtype=np.complex128)
    n_r, n_s = d.shape
    body = np.empty((n_s, n_r, 2), dtype="<f8")
    body[..., 0] = d.T.real
    body[..., 1] = d.T.imag
    Path(path).write_bytes(_SHOT_HEADER.pack(MAGIC, n_r, n_s, float(frequency)) + body.tobytes())


def read_shot_data(path) -> tuple[np.ndarray, float]:
    buf = Path(path).read_bytes()
    if len(buf) < _SHOT_HEADER.size:
        raise FormatError("truncated shot header")
    magic, n_r, n_s, freq = _SHOT_HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    body = buf[_SHOT_HEADER.size:]
    if len(body) != 16 * n_r * n_s:
        raise FormatError("shot body size does not match header")
    pairs = np.frombuffer(body, dtype="<f8").reshape(n_s, n_r, 2)
    return (pairs[..., 0] + 1j * pairs[..., 1]).T.copy(), freq
