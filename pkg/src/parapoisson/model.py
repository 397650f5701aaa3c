"""The explicit model metric, its conformal twist and the unitary frame.

In the temporal frame each Jordan block of size ``d`` and weights
``(w0, w_inf)`` carries the diagonal metric

    H0 = e^u * exp(-2 omega(x)) * diag(lambda_1(t), ..., lambda_d(t)),
    lambda_i(t) = (d-i)!/(i-1)! * t^(2i-d-1),

with ``t = |x|`` and ``omega = w0 |x|`` for ``x >= 3`` (puncture 0),
``omega = w_inf |x|`` for ``x <= -3`` (puncture infinity), both blended
smoothly across the middle of the cylinder.  Norms of flat sections then
behave like ``r^w t^(tau/2)`` near each puncture.

The unitary frame is ``e * diag(exp(gamma))`` with ``gamma = -log(H0)/2``;
there ``H0 = I`` and the connection is ``d + Omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bundle import FlatBundleSpec, parabolic_degree
from .curvature import curvature_interior
from .errors import DomainError, FrameMismatch
from .fields import FRAMES, ConnectionField, EndomorphismField, MetricField
from .geometry import (ConformalPreset, CylinderGrid, ScalarField, conformal_factor,
                       fubini_study, poisson_solve, volume)

BLEND_INNER = 2.0
BLEND_OUTER = 3.0
S0 = 2.0


# ---------------------------------------------------------------------------------------------
# closed-form block model
# ---------------------------------------------------------------------------------------------

def block_model_lambdas(d: int, t):
    """Diagonal entries of the rank-``d`` block model at ``t = |log r|``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 1):
        raise DomainError("block model needs t > 1")
    out = np.stack([math.factorial(d - i) / math.factorial(i - 1) * t_arr ** (2 * i - d - 1)
                    for i in range(1, d + 1)])
    return [float(v) for v in out] if out.ndim == 1 else out


def model_ode_residual(lambdas, dx: float) -> float:
    """Max residual of ``(log l_i)'' = l_i/l_{i+1} - l_{i-1}/l_i`` on a uniform radial line.

    ``lambdas`` has shape ``(d, M)``; second derivatives are 3-point.
    """
    lam = np.atleast_2d(np.asarray(lambdas, dtype=float))
    d = lam.shape[0]
    log_l = np.log(lam)
    lhs = (log_l[:, 2:] - 2 * log_l[:, 1:-1] + log_l[:, :-2]) / dx ** 2
    inner = lam[:, 1:-1]
    rhs = np.zeros_like(lhs)
    for i in range(d):
        if i + 1 < d:
            rhs[i] += inner[i] / inner[i + 1]
        if i > 0:
            rhs[i] -= inner[i - 1] / inner[i]
    return float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0


def smooth_step(s):
    """C-infinity step: 0 for s <= 0, 1 for s >= 1, and step(s) + step(1-s) = 1."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def blend_t(x):
    """Smooth stand-in for |x|: equals |x| for |x| >= 3 and stays >= 2."""
    ax = np.abs(np.asarray(x, dtype=float))
    chi = smooth_step(ax - BLEND_INNER)
    return chi * ax + (1 - chi) * np.sqrt(ax * ax + S0 * S0)


def weight_exponent(x, w0: float, winf: float):
    """omega(x): w0*|x| for x >= 3, w_inf*|x| for x <= -3."""
    x = np.asarray(x, dtype=float)
    s = smooth_step((x + BLEND_OUTER) / (2 * BLEND_OUTER))
    return blend_t(x) * (w0 * s + winf * (1 - s))


def model_log_diagonal(bundle: FlatBundleSpec, x):
    """log of the temporal-frame model diagonal without e^u; shape ``x.shape + (n,)``."""
    x = np.asarray(x, dtype=float)
    t = blend_t(x)
    cols = []
    for b, w0, wi in zip(bundle.blocks, bundle.weights_zero, bundle.weights_infinity_matched):
        om = weight_exponent(x, w0, wi)
        lam = np.log(block_model_lambdas(b.dim, t)).reshape((b.dim,) + x.shape)
        cols.extend(-2 * om + lam[i] for i in range(b.dim))
    return np.stack(cols, axis=-1)


def parabolic_log_gauge(bundle: FlatBundleSpec, x):
    x = np.asarray(x, dtype=float)
    cols = []
    for b, w0, wi in zip(bundle.blocks, bundle.weights_zero, bundle.weights_infinity_matched):
        om = weight_exponent(x, w0, wi)
        cols.extend([om] * b.dim)
    return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------------------------
# setup: density, c, u, gauges
# ---------------------------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSetup:
    """Everything the PDE code needs about one configuration on one grid."""

    bundle: FlatBundleSpec
    grid: CylinderGrid
    preset: ConformalPreset
    E: ScalarField
    c: float
    u: ScalarField
    log_hat: np.ndarray      # (Nx+1, Ny, n) log of temporal model diagonal without u
    B: np.ndarray

    @property
    def n(self) -> int:
        return self.bundle.rank

    @property
    def log_temporal(self) -> np.ndarray:
        return self.log_hat + self.u.values[..., None]

    def log_gauge(self, frame: str) -> np.ndarray:
        """Log of the diagonal gauge taking the temporal frame to ``frame``."""
        if frame == "temporal":
            return np.zeros_like(self.log_hat)
        if frame == "unitary":
            return -0.5 * self.log_temporal
        if frame == "parabolic":
            xx, _ = self.grid.mesh()
            return np.broadcast_to(parabolic_log_gauge(self.bundle, xx), self.log_hat.shape).copy()
        raise FrameMismatch(f"unknown frame {frame!r}")


def compute_c(bundle: FlatBundleSpec, E: ScalarField) -> float:
    """The constant on the right of K = cI: pi deg / (rank * Vol) on the truncated grid."""
    return math.pi * parabolic_degree(bundle) / (bundle.rank * volume(E))


def trace_curvature_hat(log_hat: np.ndarray, E: ScalarField) -> np.ndarray:
    """Tr K of the model without u, as a node field (zero on boundary rows)."""
    g = E.grid
    phi = log_hat.sum(axis=-1)
    out = np.zeros(g.shape)
    lap = ((phi[2:] - 2 * phi[1:-1] + phi[:-2]) / g.dx ** 2
           + (np.roll(phi, -1, 1) - 2 * phi + np.roll(phi, 1, 1))[1:-1] / g.dy ** 2)
    out[1:-1] = -lap / (4 * E.values[1:-1])
    return out


def solve_conformal_factor(bundle: FlatBundleSpec, E_field: ScalarField, c: float,
                           log_hat: np.ndarray | None = None, tol: float = 1e-8) -> ScalarField:
    """u with Lap u = 4E((1/n) Tr K(Hhat) - c), mean zero; NotSolvable if c is inconsistent."""
    g = E_field.grid
    if log_hat is None:
        xx, _ = g.mesh()
        log_hat = model_log_diagonal(bundle, xx)
    trk = trace_curvature_hat(log_hat, E_field)
    rhs = 4 * E_field.values * (trk / bundle.rank - c)
    return poisson_solve(ScalarField(g, rhs, E_field.preset), "mean-zero", tol=tol)


def prepare_model(bundle: FlatBundleSpec, grid: CylinderGrid,
                  preset: ConformalPreset | None = None) -> ModelSetup:
    if grid.X <= BLEND_OUTER:
        raise DomainError(f"grid half-length X={grid.X} must exceed the blend band |x| <= {BLEND_OUTER}")
    preset = preset or fubini_study()
    E = conformal_factor(preset, grid)
    xx, _ = grid.mesh()
    log_hat = model_log_diagonal(bundle, xx)
    c = compute_c(bundle, E)
    u = solve_conformal_factor(bundle, E, c, log_hat)
    return ModelSetup(bundle, grid, preset, E, c, u, log_hat, bundle.residue_matrix())


# ---------------------------------------------------------------------------------------------
# metrics, connections, frames
# ---------------------------------------------------------------------------------------------

def _diag_field(logs):
    n = logs.shape[-1]
    out = np.zeros(logs.shape + (n,), dtype=complex)
    idx = np.arange(n)
    out[..., idx, idx] = np.exp(logs)
    return out


def build_model_metric(bundle: FlatBundleSpec, grid: CylinderGrid,
                       preset: ConformalPreset | None = None, frame: str = "parabolic",
                       setup: ModelSetup | None = None) -> MetricField:
    setup = setup or prepare_model(bundle, grid, preset)
    logs = setup.log_temporal + 2 * setup.log_gauge(frame)
    return MetricField(grid, frame, _diag_field(logs))


def connection_in_gauge(setup: ModelSetup, log_g: np.ndarray, frame: str) -> ConnectionField:
    """``d + B dy`` transported by the diagonal gauge ``exp(log_g)``."""
    g = setup.grid
    n = setup.n
    B = setup.B
    idx = np.arange(n)

    def conj_B(lg):
        return B * np.exp(lg[..., None, :] - lg[..., :, None])

    ox = np.zeros(g.shape + (n, n), dtype=complex)
    ox[..., idx, idx] = np.gradient(log_g, g.dx, axis=0, edge_order=2)
    oy = conj_B(log_g)
    oy[..., idx, idx] += (np.roll(log_g, -1, 1) - np.roll(log_g, 1, 1)) / (2 * g.dy)
    ex = np.zeros((g.Nx, g.Ny, n, n), dtype=complex)
    ex[..., idx, idx] = (log_g[1:] - log_g[:-1]) / g.dx
    lg_next = np.roll(log_g, -1, 1)
    ey = conj_B(0.5 * (log_g + lg_next))
    ey[..., idx, idx] += (lg_next - log_g) / g.dy
    return ConnectionField(g, frame, ox, oy, ex, ey)


def unitary_connection(setup: ModelSetup) -> ConnectionField:
    return connection_in_gauge(setup, setup.log_gauge("unitary"), "unitary")


def connection(setup: ModelSetup, frame: str) -> ConnectionField:
    return connection_in_gauge(setup, setup.log_gauge(frame), frame)


def gauge_transform(field, from_frame: str, to_frame: str, setup: ModelSetup):
    """Move a metric, endomorphism or connection between frames.

    Metrics go by ``g^* H g``, endomorphisms by ``g^{-1} K g`` and connections
    by ``g^{-1} dg + g^{-1} Omega g`` with the diagonal gauge ``g``.
    """
    for f in (from_frame, to_frame):
        if f not in FRAMES:
            raise FrameMismatch(f"unknown frame {f!r}")
    if getattr(field, "frame", from_frame) != from_frame:
        raise FrameMismatch(f"field is in frame {field.frame!r}, not {from_frame!r}")
    lg = setup.log_gauge(to_frame) - setup.log_gauge(from_frame)
    if isinstance(field, ConnectionField):
        g = setup.grid
        n = field.n
        idx = np.arange(n)

        def conj(a, l):
            return a * np.exp(l[..., None, :] - l[..., :, None])

        ox = conj(field.ox, lg)
        ox[..., idx, idx] += np.gradient(lg, g.dx, axis=0, edge_order=2)
        oy = conj(field.oy, lg)
        oy[..., idx, idx] += (np.roll(lg, -1, 1) - np.roll(lg, 1, 1)) / (2 * g.dy)
        ex = conj(field.ex, 0.5 * (lg[1:] + lg[:-1]))
        ex[..., idx, idx] += (lg[1:] - lg[:-1]) / g.dx
        nxt = np.roll(lg, -1, 1)
        ey = conj(field.ey, 0.5 * (lg + nxt))
        ey[..., idx, idx] += (nxt - lg) / g.dy
        return ConnectionField(g, to_frame, ox, oy, ex, ey)
    values = field.values if hasattr(field, "values") else np.asarray(field)
    if isinstance(field, MetricField):
        out = values * np.exp(lg[..., :, None] + lg[..., None, :])
        return MetricField(setup.grid, to_frame, out)
    out = values * np.exp(lg[..., None, :] - lg[..., :, None])
    return EndomorphismField(setup.grid, to_frame, out)


def model_residual(setup: ModelSetup, conn: ConnectionField | None = None) -> ScalarField:
    """Pointwise Frobenius norm of K(H0) - cI (boundary rows set to 0)."""
    conn = conn or unitary_connection(setup)
    n = setup.n
    k = curvature_interior(None, conn, setup.E.values, identity=True)
    res = np.zeros(setup.grid.shape)
    res[1:-1] = np.linalg.norm(k - setup.c * np.eye(n), axis=(-2, -1))
    return ScalarField(setup.grid, res)
