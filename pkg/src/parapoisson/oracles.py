"""Independent reference solutions used to validate the flow solver."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize

from .errors import ValidationError
from .geometry import ScalarField, build_grid, poisson_solve
from .model import ModelSetup, block_model_lambdas


# ---------------------------------------------------------------------------------------------
# rank 1: the equation is linear in log H
# ---------------------------------------------------------------------------------------------

def rank1_oracle(setup: ModelSetup) -> np.ndarray:
    """h = H/H0 from the Dirichlet problem Lap log H = -4 E c, log H = log H0 on the boundary."""
    if setup.n != 1:
        raise ValidationError("rank1 oracle needs a rank-1 bundle")
    g = setup.grid
    log_h0 = setup.log_temporal[..., 0]
    rhs = ScalarField(g, -4.0 * setup.E.values * setup.c)
    F = poisson_solve(rhs, "dirichlet-zero", boundary=(log_h0[0], log_h0[-1])).values
    return np.exp(F - log_h0)


# ---------------------------------------------------------------------------------------------
# rank-2 Jordan block with zero weights: v'' = 2 exp(v), v = log(H11/H22)
# ---------------------------------------------------------------------------------------------

def jordan_closed_form(X: float, x) -> np.ndarray:
    """v = 2 log(k / cos(k x)) with k X / cos(k X) = 1, so that v(+-X) = -2 log X."""
    z = optimize.brentq(lambda s: s - math.cos(s), 0.0, 1.0, xtol=1e-15)
    k = z / X
    return 2.0 * np.log(k / np.cos(k * np.asarray(x, dtype=float)))


def jordan_shooting(X: float, x, rtol: float = 1e-12) -> np.ndarray:
    """Same two-point problem by symmetric shooting from x = 0 (v'(0) = 0)."""
    target = -2.0 * math.log(X)

    def end_value(v0):
        sol = integrate.solve_ivp(lambda s, y: [y[1], 2.0 * math.exp(y[0])], (0.0, X), [v0, 0.0],
                                  rtol=rtol, atol=1e-14, method="DOP853")
        if sol.status != 0:
            return math.inf
        return sol.y[0, -1] - target

    lo, hi = target - 20.0, target
    while end_value(hi) < 0:
        hi += 0.5
    v0 = optimize.brentq(end_value, lo, hi, xtol=1e-14, rtol=1e-15)
    xs, inverse = np.unique(np.abs(np.asarray(x, dtype=float)), return_inverse=True)
    sol = integrate.solve_ivp(lambda s, y: [y[1], 2.0 * math.exp(y[0])], (0.0, X), [v0, 0.0],
                              t_eval=xs, rtol=rtol, atol=1e-14, method="DOP853")
    return sol.y[0][inverse].reshape(np.shape(x))


def jordan_oracle_h(setup: ModelSetup, method: str = "shooting") -> np.ndarray:
    """Unitary-frame h of the radially symmetric rank-2 Jordan solution."""
    b = setup.bundle
    if b.rank != 2 or len(b.blocks) != 1 or any(b.weights_zero) or any(b.weights_infinity_matched):
        raise ValidationError("jordan oracle needs a single rank-2 block with zero weights")
    g = setup.grid
    fn = jordan_shooting if method == "shooting" else jordan_closed_form
    v = fn(g.X, g.x)
    lt = setup.log_temporal[:, 0, :]
    vm = lt[:, 0] - lt[:, 1]
    a = 0.5 * (v - vm)
    h = np.zeros(g.shape + (2, 2), dtype=complex)
    h[..., 0, 0] = np.exp(a)[:, None]
    h[..., 1, 1] = np.exp(-a)[:, None]
    return h


# ---------------------------------------------------------------------------------------------
# block model recursion integrated as an initial value problem
# ---------------------------------------------------------------------------------------------

def radial_ode_oracle(d: int, t0: float = 3.0, t1: float = 20.0, num: int = 200):
    """Integrate (log l_i)'' = l_i/l_{i+1} - l_{i-1}/l_i from closed-form data at t0.

    Returns ``(t, numeric, closed_form)`` with arrays of shape (d, num).
    """
    t = np.linspace(t0, t1, num)
    exps = np.array([2 * i - d - 1 for i in range(1, d + 1)], dtype=float)
    y0 = np.concatenate([np.log(block_model_lambdas(d, t0)), exps / t0])

    def rhs(_, y):
        lam = np.exp(y[:d])
        acc = np.zeros(d)
        acc[:-1] += lam[:-1] / lam[1:]
        acc[1:] -= lam[:-1] / lam[1:]
        return np.concatenate([y[d:], acc])

    sol = integrate.solve_ivp(rhs, (t0, t1), y0, t_eval=t, rtol=1e-12, atol=1e-13,
                              method="DOP853")
    return t, np.exp(sol.y[:d]), np.asarray(block_model_lambdas(d, t))


# ---------------------------------------------------------------------------------------------
# manufactured Poisson problem
# ---------------------------------------------------------------------------------------------

def manufactured_poisson(sizes=(40, 80, 160), X: float = 4.0):
    """Max error of poisson_solve on u = exp(-x^2) cos y (Dirichlet data from u)."""
    rows = []
    for nx in sizes:
        g = build_grid(X, nx, max(8, 2 * (nx // 4)))
        xx, yy = g.mesh()
        u = np.exp(-xx ** 2) * np.cos(yy)
        lap = (4 * xx ** 2 - 2) * np.exp(-xx ** 2) * np.cos(yy) - u
        sol = poisson_solve(ScalarField(g, lap), "dirichlet-zero", boundary=(u[0], u[-1]))
        rows.append({"Nx": nx, "Ny": g.Ny, "dx": g.dx, "max_error": float(np.max(np.abs(sol.values - u)))})
    for prev, cur in zip(rows, rows[1:]):
        cur["ratio"] = prev["max_error"] / cur["max_error"]
    return rows

