"""Discrete Psi and curvature K for a metric in a given frame.

For a metric matrix ``H`` in a frame where the flat connection has
coefficients ``Omega``,

    Psi(H) = 1/2 H^{-1} dH - 1/2 (Omega + H^{-1} Omega^* H),
    K(H)   = -1/(2E) sum_i (d_i Psi_i + [Omega_i, Psi_i]).

``Psi`` is evaluated on edges, with ``H^{-1} dH`` replaced by
``Log(H_i^{-1} H_{i+1}) / dx``; ``K`` is the edge divergence at nodes.  Taking
traces gives ``Tr K = -(1/4E) Lap log det H`` with the compact 5-point
Laplacian, exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import SingularH
from .linalg import comm, dagger, heigh, herm, hlog, log_ratio

POSITIVITY_FLOOR = 1e-12


def _check_positive(h, floor=POSITIVITY_FLOOR):
    w, v = heigh(h)
    if not np.all(np.isfinite(w)) or np.min(w) < floor:
        raise SingularH(f"minimum eigenvalue {np.min(w):.3e} below floor {floor:g}")
    return w, v


def psi_edges(H, conn, identity=False):
    """Edge values ``(Psi_x on x-edges, Psi_y on y-edges)``."""
    g = conn.grid
    if identity:
        px = -0.5 * (conn.ex + dagger(conn.ex))
        py = -0.5 * (conn.ey + dagger(conn.ey))
        return px, py
    H = herm(H)
    eig = _check_positive(H)
    eig_lo = (eig[0][:-1], eig[1][:-1])
    lx = log_ratio(H[:-1], H[1:], eig_lo) / g.dx
    hm = 0.5 * (H[:-1] + H[1:])
    px = 0.5 * lx - 0.5 * (conn.ex + np.linalg.solve(hm, dagger(conn.ex) @ hm))
    Hy = np.roll(H, -1, axis=1)
    ly = log_ratio(H, Hy, eig) / g.dy
    hm = 0.5 * (H + Hy)
    py = 0.5 * ly - 0.5 * (conn.ey + np.linalg.solve(hm, dagger(conn.ey) @ hm))
    return px, py


def curvature_interior(H, conn, E, identity=False):
    """``K(H)`` at interior rows ``1..Nx-1``; shape ``(Nx-1, Ny, n, n)``."""
    g = conn.grid
    px, py = psi_edges(H, conn, identity)
    ex, ey = conn.ex, conn.ey
    div = (px[1:] - px[:-1]) / g.dx + 0.5 * (comm(ex[1:], px[1:]) + comm(ex[:-1], px[:-1]))
    py_in, ey_in = py[1:-1], ey[1:-1]
    py_b, ey_b = np.roll(py_in, 1, axis=1), np.roll(ey_in, 1, axis=1)
    div = div + (py_in - py_b) / g.dy + 0.5 * (comm(ey_in, py_in) + comm(ey_b, py_b))
    return -div / (2.0 * E[1:-1, :, None, None])


def log_derivatives(H, grid):
    """Node values of ``H^{-1} dH`` computed through matrix logarithms.

    ``H^{-1/2} d/dx Log(H^{-1/2} H(x') H^{-1/2}) H^{1/2}`` at ``x' = x``, with
    second-order stencils (one-sided at the x ends).  Exact for commuting
    exponentials and H-self-adjoint by construction.
    """
    w, v = _check_positive(herm(H))
    s = np.sqrt(w)
    hs = (v * s[..., None, :]) @ dagger(v)
    his = (v * (1 / s)[..., None, :]) @ dagger(v)

    def rel_log(other):
        return hlog(his @ herm(other) @ his)

    lx = np.empty_like(H)
    fwd = hlog(his[:-1] @ herm(H[1:]) @ his[:-1])
    bwd = hlog(his[1:] @ herm(H[:-1]) @ his[1:])
    lx[1:-1] = (fwd[1:] - bwd[:-1]) / (2 * grid.dx)
    f2 = hlog(his[:2] @ herm(H[2:4]) @ his[:2])
    lx[0] = (4 * fwd[0] - f2[0]) / (2 * grid.dx)
    b2 = hlog(his[-2:] @ herm(H[-4:-2]) @ his[-2:])
    lx[-1] = -(4 * bwd[-1] - b2[-1]) / (2 * grid.dx)
    ly = (rel_log(np.roll(H, -1, 1)) - rel_log(np.roll(H, 1, 1))) / (2 * grid.dy)
    return his @ lx @ hs, his @ ly @ hs


def psi_nodes(H, conn):
    """Node values of ``Psi(H)`` with second-order central differences."""
    H = herm(H)
    dx_, dy_ = log_derivatives(H, conn.grid)
    px = 0.5 * dx_ - 0.5 * (conn.ox + np.linalg.solve(H, dagger(conn.ox) @ H))
    py = 0.5 * dy_ - 0.5 * (conn.oy + np.linalg.solve(H, dagger(conn.oy) @ H))
    return px, py


def dual_covariant_derivative(Y, conn):
    """``dY + [-Omega^*, Y]`` at nodes (the dual connection of the metric I in this frame)."""
    g = conn.grid
    dx_, dy_ = conn.dual()
    Yx = np.gradient(Y, g.dx, axis=0, edge_order=2)
    Yy = (np.roll(Y, -1, axis=1) - np.roll(Y, 1, axis=1)) / (2 * g.dy)
    return Yx + comm(dx_, Y), Yy + comm(dy_, Y)
