"""On-disk field formats.

``AFP1`` binary layout (little endian)::

    b"AFP1" | u32 n | f64 L | n*n pairs of f64 (re, im), row-major

Row ``i`` is the node column ``x_i``; entry ``[i, j]`` sits at ``(x_i, y_j)``.
CSV export writes ``x,y,value`` rows (``value_re,value_im`` for complex data).
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .spectral import DensityField, Field, Grid

MAGIC = b"AFP1"
_HEADER = struct.Struct("<4sId")


class FormatError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


def write_afp1(path: str | Path, f: Field | DensityField) -> None:
    grid = f.grid
    data = np.empty((grid.n, grid.n, 2), dtype="<f8")
    vals = np.asarray(f.values)
    data[..., 0] = vals.real
    data[..., 1] = vals.imag if np.iscomplexobj(vals) else 0.0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, grid.n, grid.L))
        fh.write(data.tobytes(order="C"))


def read_afp1(path: str | Path) -> Field:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, n, L = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 16 * n * n
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, n, 2)
    return Field(Grid(L, n), data[..., 0] + 1j * data[..., 1])


def write_csv(path: str | Path, f: Field | DensityField) -> None:
    X, Y = f.grid.mesh()
    vals = np.asarray(f.values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if np.iscomplexobj(vals):
            w.writerow(["x", "y", "value_re", "value_im"])
            for x, y, v in zip(X.ravel(), Y.ravel(), vals.ravel()):
                w.writerow([repr(float(x)), repr(float(y)), repr(v.real), repr(v.imag)])
        else:
            w.writerow(["x", "y", "value"])
            for x, y, v in zip(X.ravel(), Y.ravel(), vals.ravel()):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])


def read_csv_density(path: str | Path, grid: Grid) -> DensityField:
    """Load an ``x,y,value`` CSV onto ``grid``; node coordinates must match."""
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if table.shape[0] != grid.n * grid.n:
        raise GridMismatchError(
            f"{path}: {table.shape[0]} rows, grid needs {grid.n * grid.n}")
    X, Y = grid.mesh()
    tol = 1e-9 * grid.L
    if (np.max(np.abs(table[:, 0] - X.ravel())) > tol
            or np.max(np.abs(table[:, 1] - Y.ravel())) > tol):
        raise GridMismatchError(f"{path}: node coordinates do not match the grid")
    return DensityField(grid, table[:, 2].reshape(grid.n, grid.n))
