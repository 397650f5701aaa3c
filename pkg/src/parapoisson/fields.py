"""Matrix-valued fields on the cylinder and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import BadDimensions, FrameMismatch, ValidationError
from .geometry import CylinderGrid
from .linalg import herm

FRAMES = ("temporal", "parabolic", "unitary")


def _check_frame(frame):
    if frame not in FRAMES:
        raise FrameMismatch(f"unknown frame {frame!r}")


def _matrix_values(grid, values):
    v = np.asarray(values, dtype=complex)
    if v.ndim != 4 or v.shape[:2] != grid.shape or v.shape[2] != v.shape[3]:
        raise BadDimensions(f"matrix field shape {v.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError("matrix field has non-finite entries")
    return v


@dataclass(frozen=True)
class EndomorphismField:
    grid: CylinderGrid
    frame: str
    values: np.ndarray

    def __post_init__(self):
        _check_frame(self.frame)
        object.__setattr__(self, "values", _matrix_values(self.grid, self.values))

    @property
    def n(self) -> int:
        return self.values.shape[-1]


@dataclass(frozen=True)
class MetricField(EndomorphismField):
    """Hermitian positive-definite matrices; symmetrized on construction."""

    def __post_init__(self):
        super().__post_init__()
        v = herm(self.values)
        if np.min(np.linalg.eigvalsh(v)) <= 0:
            raise ValidationError("metric field is not positive definite")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ConnectionField:
    """Coefficients of ``d + Omega_x dx + Omega_y dy``.

    ``ox``/``oy`` are node values; ``ex`` lives on x-edges ``i+1/2`` (shape
    ``(Nx, Ny, n, n)``) and ``ey`` on y-edges ``j+1/2`` (shape
    ``(Nx+1, Ny, n, n)``, periodic).  The discrete curvature uses the edge values.
    """

    grid: CylinderGrid
    frame: str
    ox: np.ndarray
    oy: np.ndarray
    ex: np.ndarray
    ey: np.ndarray

    def __post_init__(self):
        _check_frame(self.frame)

    @property
    def n(self) -> int:
        return self.ox.shape[-1]

    def dual(self):
        """Node coefficients of the dual connection when the metric is I in this frame."""
        return -np.conj(np.swapaxes(self.ox, -1, -2)), -np.conj(np.swapaxes(self.oy, -1, -2))


def write_matrix_csv(field, path, extra=None) -> None:
    """CSV with columns x, y, then (re, im) for every entry in row-major order; JSON sidecar."""
    g = field.grid
    n = field.values.shape[-1]
    header = ["x", "y"]
    for a in range(n):
        for b in range(n):
            header += [f"re_{a}{b}", f"im_{a}{b}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, xv in enumerate(g.x):
            for j, yv in enumerate(g.y):
                row = [repr(float(xv)), repr(float(yv))]
                for z in field.values[i, j].ravel():
                    row += [repr(float(z.real)), repr(float(z.imag))]
                w.writerow(row)
    meta = {"schema": "parapoisson.matrix-field/1", "frame": field.frame, "n": n,
            "grid": g.to_dict()}
    meta.update(extra or {})
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def read_matrix_csv(path):
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    grid = CylinderGrid(**meta["grid"])
    n = meta["n"]
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    vals = data[:, 2::2] + 1j * data[:, 3::2]
    vals = vals.reshape(grid.shape + (n, n))
    return grid, meta, vals
