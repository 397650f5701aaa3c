"""Truncated log-cylinder, conformal densities, quadrature and a scalar Poisson solver.

Coordinates are ``x = -log r`` and ``y = theta``; the puncture at 0 sits at
``x = +inf`` and the puncture at infinity at ``x = -inf``.  Nodes are
``x_i = -X + i dx`` for ``i = 0..Nx`` (rows 0 and Nx are the boundary) and
``y_j = j dy`` for ``j = 0..Ny-1`` (periodic).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import BadDimensions, NonPositive, NotSolvable, ValidationError
from .kernels import block_tridiag_solve

PRESET_KINDS = ("fubini-study", "loftin-type", "custom-table")


@dataclass(frozen=True)
class CylinderGrid:
    X: float
    Nx: int
    Ny: int

    def __post_init__(self):
        problems = []
        if not (math.isfinite(self.X) and self.X > 1):
            problems.append(f"X must exceed 1, got {self.X}")
        if int(self.Nx) != self.Nx or self.Nx < 8:
            problems.append(f"Nx must be an integer >= 8, got {self.Nx}")
        if int(self.Ny) != self.Ny or self.Ny < 8 or self.Ny % 2:
            problems.append(f"Ny must be an even integer >= 8, got {self.Ny}")
        if problems:
            raise BadDimensions("; ".join(problems), problems)
        object.__setattr__(self, "Nx", int(self.Nx))
        object.__setattr__(self, "Ny", int(self.Ny))
        object.__setattr__(self, "X", float(self.X))

    @property
    def dx(self) -> float:
        return 2 * self.X / self.Nx

    @property
    def dy(self) -> float:
        return 2 * math.pi / self.Ny

    @property
    def x(self) -> np.ndarray:
        return -self.X + self.dx * np.arange(self.Nx + 1)

    @property
    def y(self) -> np.ndarray:
        return self.dy * np.arange(self.Ny)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nx + 1, self.Ny)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")

    def x_weights(self) -> np.ndarray:
        w = np.full(self.Nx + 1, self.dx)
        w[[0, -1]] *= 0.5
        return w

    def to_dict(self) -> dict:
        return {"X": self.X, "Nx": self.Nx, "Ny": self.Ny}


def build_grid(X: float, Nx: int, Ny: int) -> CylinderGrid:
    return CylinderGrid(X, Nx, Ny)


def _sech2(x):
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


@dataclass(frozen=True)
class ConformalPreset:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PRESET_KINDS:
            raise ValidationError(f"unknown conformal preset {self.kind!r}")
        p = dict(self.params)
        if self.kind == "loftin-type":
            q = float(p.get("q", 0.0))
            if q < 0:
                raise ValidationError("loftin-type requires q >= 0")
            p["q"] = q
        if self.kind == "custom-table":
            if "value" not in p and not ("x" in p and "E" in p):
                raise ValidationError("custom-table needs either 'value' or both 'x' and 'E'")
        object.__setattr__(self, "params", p)

    def density(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "fubini-study":
            return _sech2(x)
        if self.kind == "loftin-type":
            return _sech2(x) * (1.0 + x * x) ** (-0.5 * self.params["q"])
        if "value" in self.params:
            return np.full_like(x, float(self.params["value"]))
        return np.interp(x, np.asarray(self.params["x"], float), np.asarray(self.params["E"], float))

    def tail_integral(self, X: float) -> float:
        """Integral of the x-profile over x > X plus x < -X (before the 2 pi of y)."""
        if self.kind == "fubini-study":
            return 2.0 * (1.0 - math.tanh(X))
        if self.kind == "loftin-type":
            val, _ = integrate.quad(lambda s: float(self.density(np.array(s))), X, np.inf,
                                    epsabs=1e-14, epsrel=1e-12)
            return 2.0 * val
        return 0.0


def fubini_study() -> ConformalPreset:
    return ConformalPreset("fubini-study")


@dataclass(frozen=True)
class ScalarField:
    grid: CylinderGrid
    values: np.ndarray
    preset: ConformalPreset | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise BadDimensions(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("scalar field has non-finite values")
        object.__setattr__(self, "values", v)


def conformal_factor(preset: ConformalPreset, grid: CylinderGrid) -> ScalarField:
    xx, _ = grid.mesh()
    vals = preset.density(xx)
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise NonPositive("conformal density must be positive everywhere")
    return ScalarField(grid, vals, preset)


def _integrate(values: np.ndarray, grid: CylinderGrid) -> float:
    return float(np.sum(grid.x_weights()[:, None] * values) * grid.dy)


def volume(E_field: ScalarField, grid: CylinderGrid | None = None, tail: str = "none") -> float:
    grid = grid or E_field.grid
    if np.any(E_field.values <= 0):
        raise NonPositive("conformal density must be positive")
    vol = _integrate(E_field.values, grid)
    if tail == "analytic":
        if E_field.preset is None:
            raise ValidationError("analytic tail needs the preset that generated the density")
        vol += 2 * math.pi * E_field.preset.tail_integral(grid.X)
    elif tail != "none":
        raise ValidationError(f"tail must be 'analytic' or 'none', got {tail!r}")
    return vol


def integrate_density(f: ScalarField | np.ndarray, E_field: ScalarField | None = None,
                      kind: str = "dnu", grid: CylinderGrid | None = None) -> float:
    """Trapezoid integral of ``f`` against ``E dx dy`` (kind 'dnu') or ``dx dy`` ('invariant')."""
    values = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)
    grid = grid or (f.grid if isinstance(f, ScalarField) else E_field.grid)
    if kind == "dnu":
        if E_field is None:
            raise ValidationError("dnu integrals need the conformal density")
        values = values * E_field.values
    elif kind != "invariant":
        raise ValidationError(f"kind must be 'dnu' or 'invariant', got {kind!r}")
    return _integrate(values, grid)


def interior_sum(values: np.ndarray, grid: CylinderGrid) -> float:
    """Rectangle rule over interior rows, matching the flux form of the discrete divergence."""
    return float(np.sum(values) * grid.dx * grid.dy)


def laplacian_apply(f: ScalarField) -> ScalarField:
    g = f.grid
    u = f.values
    out = np.empty_like(u)
    uyy = (np.roll(u, -1, 1) - 2 * u + np.roll(u, 1, 1)) / g.dy ** 2
    out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / g.dx ** 2
    out[0] = (2 * u[0] - 5 * u[1] + 4 * u[2] - u[3]) / g.dx ** 2
    out[-1] = (2 * u[-1] - 5 * u[-2] + 4 * u[-3] - u[-4]) / g.dx ** 2
    return ScalarField(g, out + uyy, f.preset)


def y_symbol(grid: CylinderGrid) -> np.ndarray:
    """Eigenvalues of the periodic 3-point second difference in y, in FFT order."""
    n = np.fft.fftfreq(grid.Ny, d=1.0 / grid.Ny)
    return -4.0 * np.sin(0.5 * n * grid.dy) ** 2 / grid.dy ** 2


def _tridiag_modes(lower, diag, upper, rhs_hat):
    """Scalar tridiagonal solves, one per Fourier mode; diag is (modes, K)."""
    k = diag.shape[1]
    ones = np.ones((k, 1, 1), dtype=complex)
    return block_tridiag_solve(lower[:, None, None] * ones, diag[..., None, None],
                               upper[:, None, None] * ones, rhs_hat[..., None])[..., 0]


def poisson_solve(rhs: ScalarField, bc: str = "dirichlet-zero", boundary=None,
                  tol: float = 1e-8) -> ScalarField:
    """Solve ``u_xx + u_yy = rhs`` with the compact 5-point stencil.

    ``bc='dirichlet-zero'`` fixes ``u`` on rows 0 and Nx (to zero, or to the
    pair of y-profiles in ``boundary``); ``bc='mean-zero'`` uses a ghost-node
    Neumann condition and returns the solution with zero trapezoid mean.
    FFT in y, one tridiagonal solve per mode in x.
    """
    g = rhs.grid
    f = rhs.values
    lam = y_symbol(g)
    idx2 = 1.0 / g.dx ** 2
    if bc == "dirichlet-zero":
        lift = np.zeros(g.shape)
        if boundary is not None:
            lo_b, hi_b = (np.broadcast_to(np.asarray(b, float), (g.Ny,)) for b in boundary)
            s = (g.x[:, None] + g.X) / (2 * g.X)
            lift = (1 - s) * lo_b[None, :] + s * hi_b[None, :]
        rhs_int = f[1:-1] - ((np.roll(lift, -1, 1) - 2 * lift + np.roll(lift, 1, 1)) / g.dy ** 2)[1:-1]
        k = g.Nx - 1
        rhs_hat = np.fft.fft(rhs_int, axis=1).T
        lower = np.full(k, idx2, dtype=complex)
        upper = np.full(k, idx2, dtype=complex)
        diag = (-2 * idx2 + lam)[:, None] * np.ones(k)
        sol = _tridiag_modes(lower, diag, upper, rhs_hat)
        u = lift.copy()
        u[1:-1] += np.fft.ifft(sol.T, axis=1).real
        return ScalarField(g, u, rhs.preset)
    if bc != "mean-zero":
        raise ValidationError(f"bc must be 'dirichlet-zero' or 'mean-zero', got {bc!r}")
    total = _integrate(f, g)
    scale = _integrate(np.abs(f), g)
    if abs(total) > tol * scale and abs(total) > 1e-12:
        raise NotSolvable(f"mean-zero Poisson problem is incompatible: integral of rhs = {total:.3e}")
    k = g.Nx + 1
    rhs_hat = np.fft.fft(f, axis=1).T
    lower = np.full(k, idx2, dtype=complex)
    upper = np.full(k, idx2, dtype=complex)
    upper[0] = 2 * idx2
    lower[-1] = 2 * idx2
    diag = (-2 * idx2 + lam)[:, None] * np.ones(k)
    sol = np.zeros((g.Ny, k), dtype=complex)
    sol[1:] = _tridiag_modes(lower, diag[1:], upper, rhs_hat[1:])
    # zero mode: pin u_0 = 0 and drop its (redundant) equation
    sol[0, 1:] = _tridiag_modes(lower[1:], diag[:1, 1:], upper[1:], rhs_hat[:1, 1:])[0]
    u = np.fft.ifft(sol.T, axis=1).real
    u -= _integrate(u, g) / (2 * g.X * 2 * math.pi)
    return ScalarField(g, u, rhs.preset)


def write_scalar_csv(field_: ScalarField, path) -> None:
    g = field_.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for i, xv in enumerate(g.x):
            for j, yv in enumerate(g.y):
                w.writerow([repr(float(xv)), repr(float(yv)), repr(float(field_.values[i, j]))])
