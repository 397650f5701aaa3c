"""Derived quantities and verification functionals.

Psi and the second fundamental form, curvature integrals (degree and
Chern-Weil), asymptotic tameness fits, the decay profile of the gradient,
the Fourier gap, the lifted Hermitian-Yang-Mills identity, flatness of the
dual connection and the uniqueness comparison.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .bundle import FlatSubbundleSpec, nilpotent_weights
from .curvature import curvature_interior, psi_nodes
from .errors import InsufficientRange, ValidationError, ZeroInput
from .fields import ConnectionField, MetricField
from .flow import curvature_K
from .linalg import comm, dagger, heigh, herm
from .model import BLEND_OUTER, ModelSetup, connection, gauge_transform


# ---------------------------------------------------------------------------------------------
# Psi and beta
# ---------------------------------------------------------------------------------------------

@dataclass(frozen=True)
class OneFormField:
    grid: object
    frame: str
    x: np.ndarray
    y: np.ndarray

    def norm_sq(self, H=None) -> np.ndarray:
        """Pointwise |.|^2 in the metric H (Frobenius when H is None)."""
        total = 0.0
        for comp in (self.x, self.y):
            if H is None:
                total = total + np.sum(np.abs(comp) ** 2, axis=(-2, -1))
            else:
                adj = np.linalg.solve(H, dagger(comp) @ H)
                total = total + np.trace(comp @ adj, axis1=-2, axis2=-1).real
        return total


def _values(H):
    return H.values if hasattr(H, "values") else np.asarray(H)


def psi_field(H, setup: ModelSetup, frame: str = "unitary", conn=None) -> OneFormField:
    conn = conn or connection(setup, frame)
    px, py = psi_nodes(_values(H), conn)
    return OneFormField(setup.grid, frame, px, py)


def self_adjointness_defect(psi: OneFormField, H) -> float:
    H = _values(H)
    out = 0.0
    for comp in (psi.x, psi.y):
        adj = np.linalg.solve(H, dagger(comp) @ H)
        out = max(out, float(np.max(np.abs(adj - comp))))
    return out


def orthogonal_projection(H, diag_mask) -> np.ndarray:
    """H-orthogonal projection onto the coordinate subspace selected by ``diag_mask``."""
    H = _values(H)
    idx = np.flatnonzero(np.asarray(diag_mask) > 0.5)
    n = H.shape[-1]
    P = np.zeros((n, len(idx)))
    P[idx, np.arange(len(idx))] = 1.0
    inner = P.T @ H @ P
    return P @ np.linalg.solve(inner, P.T @ H)


def _node_derivatives(A, grid):
    ax = np.gradient(A, grid.dx, axis=0, edge_order=2)
    ay = (np.roll(A, -1, 1) - np.roll(A, 1, 1)) / (2 * grid.dy)
    return ax, ay


def second_fundamental_form(H, setup: ModelSetup, sub: FlatSubbundleSpec,
                            frame: str = "unitary", conn=None) -> OneFormField:
    """beta = (I - pi) hat-nabla^H(pi) pi with pi the H-orthogonal projection onto S."""
    conn = conn or connection(setup, frame)
    Hv = _values(H)
    pi = orthogonal_projection(Hv, setup.bundle.projection_diagonal(sub))
    g = setup.grid
    hx, hy = _node_derivatives(Hv, g)
    px, py = _node_derivatives(pi, g)
    q = np.eye(Hv.shape[-1]) - pi
    comps = []
    for dH, om, dpi in ((hx, conn.ox, px), (hy, conn.oy, py)):
        hat = np.linalg.solve(Hv, dH - dagger(om) @ Hv)
        comps.append(q @ (dpi + comm(hat, pi)) @ pi)
    return OneFormField(g, frame, *comps)


# ---------------------------------------------------------------------------------------------
# curvature integrals
# ---------------------------------------------------------------------------------------------

def _window_weights(grid, X_window):
    """Trapezoid x-weights restricted to |x| <= X_window (on nodes)."""
    x = grid.x
    inside = np.abs(x) <= X_window + 1e-9
    w = np.where(inside, grid.dx, 0.0)
    ends = np.flatnonzero(inside)[[0, -1]]
    w[ends] *= 0.5
    return w


def _integrate_rows(values, grid, X_window=None, weight=None):
    X_window = grid.X if X_window is None else X_window
    w = _window_weights(grid, X_window)
    vals = values if weight is None else values * weight
    return float(np.sum(w[:, None] * vals) * grid.dy)


@dataclass
class DegreeEstimate:
    value: float
    truncated: float
    tail: float
    sensitivity: float
    X: float

    def to_dict(self) -> dict:
        return {"value": self.value, "truncated": self.truncated, "tail": self.tail,
                "truncation_sensitivity": self.sensitivity, "X": self.X}


def _tail_volume(setup, X):
    return 2 * math.pi * setup.preset.tail_integral(X)


def degree_via_curvature(H, setup: ModelSetup, frame: str = "unitary", tail: bool = True,
                         K=None) -> DegreeEstimate:
    """(1/pi) int Tr K dnu; ``tail`` adds n c Vol(|x| > X) where the model is exact."""
    g = setup.grid
    K = curvature_K(H, setup, frame=frame).values if K is None else K
    tr = np.trace(K, axis1=-2, axis2=-1).real

    def at(Xw):
        trunc = _integrate_rows(tr, g, Xw, setup.E.values) / math.pi
        t = setup.n * setup.c * _tail_volume(setup, Xw) / math.pi if tail else 0.0
        return trunc, t

    trunc, t = at(g.X)
    trunc2, t2 = at(g.X - 1.0)
    return DegreeEstimate(trunc + t, trunc, t, abs((trunc + t) - (trunc2 + t2)), g.X)


def chern_weil_degree(H, setup: ModelSetup, sub: FlatSubbundleSpec, frame: str = "unitary",
                      tail: bool = True, K=None) -> DegreeEstimate:
    """(1/pi)[int Tr(pi K pi) dnu - 1/4 int |beta|^2 dx dy].

    With ``tail`` the model's closed-form contributions beyond |x| = X are
    added: ``c rk(S) Vol_tail`` for the curvature term and
    ``2 pi s(d - s) / X`` per block and end for |beta|^2.
    """
    g = setup.grid
    Hv = _values(H)
    K = curvature_K(Hv, setup, frame=frame).values if K is None else K
    pi = orthogonal_projection(Hv, setup.bundle.projection_diagonal(sub))
    trk = np.trace(pi @ K @ pi, axis1=-2, axis2=-1).real
    beta2 = second_fundamental_form(Hv, setup, sub, frame).norm_sq(Hv)
    rk = sub.global_rank
    cut = sum(s * (b.dim - s) for s, b in zip(sub.prefixes["zero"], setup.bundle.blocks))

    def at(Xw):
        trunc = (_integrate_rows(trk, g, Xw, setup.E.values)
                 - 0.25 * _integrate_rows(beta2, g, Xw)) / math.pi
        t = 0.0
        if tail:
            t = (setup.c * rk * _tail_volume(setup, Xw)
                 - 0.25 * 2 * (2 * math.pi * cut / Xw)) / math.pi
        return trunc, t

    trunc, t = at(g.X)
    trunc2, t2 = at(g.X - 1.0)
    return DegreeEstimate(trunc + t, trunc, t, abs((trunc + t) - (trunc2 + t2)), g.X)


def induced_curvature_trace(H, setup: ModelSetup, sub: FlatSubbundleSpec,
                            frame: str = "unitary") -> np.ndarray:
    """Tr K(H_S) at interior rows for a block-aligned S (induced metric and connection)."""
    conn = connection(setup, frame)
    idx = np.flatnonzero(setup.bundle.projection_diagonal(sub) > 0.5)
    Hv = _values(H)
    HS = Hv[..., idx[:, None], idx[None, :]]
    sub_conn = ConnectionField(conn.grid, frame, *(a[..., idx[:, None], idx[None, :]]
                                                   for a in (conn.ox, conn.oy, conn.ex, conn.ey)))
    K = curvature_interior(HS, sub_conn, setup.E.values)
    return np.trace(K, axis1=-2, axis2=-1).real


# ---------------------------------------------------------------------------------------------
# tameness
# ---------------------------------------------------------------------------------------------

@dataclass
class BlockFit:
    puncture: str
    block: int
    weight: float
    w_hat_B: float
    eps_hat_B: float | None
    w_hat_C: list
    w_ci_C: list
    tau_half: list
    tau_half_hat: list
    tau_ci: list
    eps_hat_D: float | None
    passes: dict

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TamenessReport:
    window: tuple
    blocks: list = field(default_factory=list)
    clause_A: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(all(b.passes.values()) for b in self.blocks)

    def to_dict(self) -> dict:
        return {"schema": "parapoisson.tameness/1", "window": list(self.window),
                "passed": self.passed, "clause_A": self.clause_A,
                "blocks": [b.to_dict() for b in self.blocks]}


W_REL, W_ABS = 0.02, 2e-3
TAU_REL, TAU_ABS = 0.05, 5e-3
EPS_MARGIN = 0.1
NEGLIGIBLE = 1e-7


def _within(est, target, rel, absolute):
    return abs(est - target) <= (rel * abs(target) if abs(target) > 1e-12 else absolute)


def _power_fit(t, y):
    """Fit y = a + b t^{-p}; returns (a, b, p, max residual of the remainder)."""
    best = None
    for p in np.linspace(0.1, 4.0, 79):
        A = np.column_stack([np.ones_like(t), t ** -p])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        res = float(np.sum((A @ coef - y) ** 2))
        if best is None or res < best[0]:
            best = (res, coef, p)
    _, (a, b), p = best
    return float(a), float(b), float(p)


def _loglog_decay(t, r):
    if np.max(r) < NEGLIGIBLE:
        return None
    keep = r > 0
    slope_, _ = np.polyfit(np.log(t[keep]), np.log(r[keep]), 1)
    return float(-slope_)


def tameness_report(H, setup: ModelSetup, frame: str = "unitary",
                    window: tuple | None = None, min_nodes: int = 20) -> TamenessReport:
    """Least-squares checks of the asymptotic conditions on e^{-u} H.

    Signs follow the package convention: flat sections of a block with
    weight w have |sigma| ~ r^w |log r|^{tau/2}.
    """
    g = setup.grid
    bundle = setup.bundle
    Hv = _values(H)
    Ht = gauge_transform(MetricField(g, frame, Hv), frame, "temporal", setup).values
    Ht = Ht * np.exp(-setup.u.values)[..., None, None]
    conn_t = connection(setup, "temporal")
    # the window never reaches into the blend band, whatever X is
    lo, hi = window or (max(g.X / 2, BLEND_OUTER), g.X - 1.0)
    rep = TamenessReport((lo, hi))
    ends = {"zero": (g.x >= lo - 1e-9) & (g.x <= hi + 1e-9),
            "infinity": (g.x <= -lo + 1e-9) & (g.x >= -hi - 1e-9)}
    px, py = psi_nodes(Ht, conn_t)
    w_h, v_h = heigh(Ht)
    hs = (v_h * np.sqrt(w_h)[..., None, :]) @ dagger(v_h)
    his = (v_h * (1 / np.sqrt(w_h))[..., None, :]) @ dagger(v_h)
    slices = bundle.block_slices()
    weights = {"zero": bundle.weights_zero, "infinity": bundle.weights_infinity_matched}
    kre = np.array([b.kappa.real for b in bundle.blocks for _ in range(b.dim)])
    for end, rows in ends.items():
        if rows.sum() < min_nodes:
            raise InsufficientRange(f"{rows.sum()} nodes in the fit window at {end}; need {min_nodes}")
        s_e = -1.0 if end == "zero" else 1.0
        t = np.abs(g.x[rows])
        # clause D target: Psi_x = s_e w I, Psi_y = -Re(kappa) I (blockwise)
        wdiag = np.concatenate([[w] * b.dim for w, b in zip(weights[end], bundle.blocks)])
        rx = px[rows] - np.diag(s_e * wdiag)
        ry = py[rows] + np.diag(kre)
        rem = np.maximum(np.linalg.norm(hs[rows] @ rx @ his[rows], axis=(-2, -1)),
                         np.linalg.norm(hs[rows] @ ry @ his[rows], axis=(-2, -1))).max(axis=1)
        eps_D = _loglog_decay(t, rem)
        for k, (sl, b) in enumerate(zip(slices, bundle.blocks)):
            w = weights[end][k]
            sub_conn = ConnectionField(g, "temporal", conn_t.ox[..., sl, sl], conn_t.oy[..., sl, sl],
                                       conn_t.ex[..., sl, sl], conn_t.ey[..., sl, sl])
            psx, _ = psi_nodes(Ht[..., sl, sl], sub_conn)
            yB = s_e * np.trace(psx[rows], axis1=-2, axis2=-1).real.mean(axis=1)
            rB = yB - float(np.mean(yB))
            if np.max(np.abs(rB)) < NEGLIGIBLE:
                aB, epsB = float(np.mean(yB)), None
            else:
                aB, _, epsB = _power_fit(t, yB)
            w_hat_B = aB / b.dim
            taus = [tv / 2 for tv in nilpotent_weights(b.dim)]
            wC, wciC, tauC, tauci = [], [], [], []
            # t^-2 absorbs the leading correction left by bounded flat changes of frame
            A = np.column_stack([np.ones_like(t), t, np.log(t), t ** -2.0])
            for a_idx in range(b.dim):
                i = sl.start + a_idx
                y = 0.5 * np.log(Ht[rows, 0, i, i].real)
                coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
                dof = max(len(t) - A.shape[1], 1)
                s2 = float(np.sum((A @ coef - y) ** 2)) / dof
                cov = s2 * np.linalg.inv(A.T @ A)
                wC.append(float(-coef[1]))
                wciC.append(float(1.96 * math.sqrt(max(cov[1, 1], 0.0))))
                tauC.append(float(coef[2]))
                tauci.append(float(1.96 * math.sqrt(max(cov[2, 2], 0.0))))
            passes = {
                "B": _within(w_hat_B, w, W_REL, W_ABS) and (epsB is None or epsB > EPS_MARGIN),
                "C": all(_within(e, w, W_REL, W_ABS) for e in wC)
                and all(_within(e, tv, TAU_REL, TAU_ABS) for e, tv in zip(tauC, taus)),
                "D": eps_D is None or eps_D > EPS_MARGIN,
            }
            rep.blocks.append(BlockFit(end, k, w, w_hat_B, epsB, wC, wciC, taus, tauC, tauci,
                                       eps_D, passes))
    K = curvature_K(Hv, setup, frame=frame).values
    dens = np.linalg.norm(K, axis=(-2, -1)) * setup.E.values
    cuts = np.linspace(lo, hi, 5)
    rep.clause_A = {"cutoffs": cuts.tolist(),
                    "tail_integrals": [_integrate_rows(np.where(np.abs(g.x)[:, None] >= c_, dens, 0.0), g)
                                       for c_ in cuts]}
    return rep


# ---------------------------------------------------------------------------------------------
# gradient decay
# ---------------------------------------------------------------------------------------------

def gradient_decay_profile(h, grid, cutoffs=None):
    """Table of (X', int_{|x|>X'} |grad h|^2 dx dy), a constant C and a decay exponent."""
    h = np.asarray(h)
    if h.ndim == 2:
        h = h[..., None, None]
    hx, hy = _node_derivatives(h, grid)
    dens = np.sum(np.abs(hx) ** 2 + np.abs(hy) ** 2, axis=(-2, -1))
    if cutoffs is None:
        cutoffs = np.linspace(grid.X / 4, grid.X - 1.0, 8)
    w = grid.x_weights()
    rows = []
    for c_ in cutoffs:
        mask = np.abs(grid.x) > c_
        rows.append({"X_prime": float(c_),
                     "integral": float(np.sum((w * mask)[:, None] * dens) * grid.dy)})
    vals = np.array([r["integral"] for r in rows])
    xs = np.array([r["X_prime"] for r in rows])
    C = float(np.max(vals * xs))
    exponent = None
    if np.all(vals > 1e-300):
        exponent = float(-np.polyfit(np.log(xs), np.log(vals), 1)[0])
    sup_tr = float(np.max(np.trace(h, axis1=-2, axis2=-1).real))
    bound = 100 * math.pi * sup_tr ** 2
    return {"table": rows, "C": C, "exponent": exponent, "bound": bound, "flag": C > bound}


def write_profile_csv(profile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["X_prime", "integral"])
        for r in profile["table"]:
            w.writerow([repr(r["X_prime"]), repr(r["integral"])])


# ---------------------------------------------------------------------------------------------
# Fourier gap
# ---------------------------------------------------------------------------------------------

def fourier_gap(samples, lam: float, tol: float = 1e-12):
    """Ratio int|g' + i lam g|^2 / int|g|^2 on the circle and the bound min_N (N + lam)^2."""
    g = np.asarray(samples, dtype=complex)
    ny = g.shape[-1]
    if ny < 8:
        raise ValidationError("fourier_gap needs at least 8 samples")
    coef = np.fft.fft(g, axis=-1) / ny
    modes = np.fft.fftfreq(ny, d=1.0 / ny)
    power = np.abs(coef) ** 2
    denom = float(np.sum(power))
    if denom == 0.0:
        raise ZeroInput("fourier_gap of the zero function")
    ratio = float(np.sum((modes + lam) ** 2 * power)) / denom
    gap = float(min((N + lam) ** 2 for N in range(-ny, ny + 1)))
    return {"ratio": ratio, "gap": gap, "holds": ratio >= gap - tol}


# ---------------------------------------------------------------------------------------------
# dimension reduction identities on a patch
# ---------------------------------------------------------------------------------------------

def _patch(center, h, m):
    x0, y0 = center
    s = h * np.arange(-m, m + 1)
    return np.meshgrid(x0 + s, y0 + s, indexing="ij")


def _psi_from(Hf, Gf, X, Y, h):
    H = Hf(X, Y)
    Gx, Gy = Gf(X, Y)
    Hx = (Hf(X + h, Y) - Hf(X - h, Y)) / (2 * h)
    Hy = (Hf(X, Y + h) - Hf(X, Y - h)) / (2 * h)
    out = []
    for dH, G in ((Hx, Gx), (Hy, Gy)):
        out.append(0.5 * (np.linalg.solve(H, dH) - np.linalg.solve(H, dagger(G) @ H) - G))
    return H, (Gx, Gy), out


def hym_lift_check(H_fn, Gamma_fn, center=(0.0, 0.0), h: float = 0.02, m: int = 4) -> float:
    """max |F_{kbar j} + 1/2 nabla_k Psi_j| for the pulled-back bundle on the tangent bundle.

    Sections are constant along the fibre coordinates xi; the complex
    derivatives d/dz = (d/dx - i d/dxi)/2 are taken by central differences
    in all four real directions on a (2m+1)^2 x 3^2 lattice.
    """
    X, Y = _patch(center, h, m)
    _, G, P = _psi_from(H_fn, Gamma_fn, X, Y, h)

    def lift(F):
        return np.broadcast_to(F[:, :, None, None], F.shape[:2] + (3, 3) + F.shape[2:])

    a = [lift(0.5 * (G[j] + 2 * P[j])) for j in range(2)]
    b = [lift(0.5 * G[k]) for k in range(2)]

    def d(F, axis):
        out = (np.roll(F, -1, axis) - np.roll(F, 1, axis)) / (2 * h)
        return out[1:-1, 1:-1, 1, 1]

    def dz(F, j):
        return 0.5 * (d(F, j) - 1j * d(F, 2 + j))

    def dzbar(F, k):
        return 0.5 * (d(F, k) + 1j * d(F, 2 + k))

    worst = 0.0
    for j in range(2):
        for k in range(2):
            F = dz(b[k], j) - dzbar(a[j], k) + comm(a[j][1:-1, 1:-1, 1, 1], b[k][1:-1, 1:-1, 1, 1])
            dPk = (np.roll(P[j], -1, k) - np.roll(P[j], 1, k))[1:-1, 1:-1] / (2 * h)
            target = -0.5 * (dPk + comm(G[k][1:-1, 1:-1], P[j][1:-1, 1:-1]))
            worst = max(worst, float(np.max(np.abs(F - target))))
    return worst


def dual_flatness_check(H_fn, Gamma_fn, center=(0.0, 0.0), h: float = 0.02, m: int = 4) -> float:
    """max |curvature of d + H^{-1}dH - H^{-1} Gamma^* H| on a patch (central differences)."""
    X, Y = _patch(center, h, m)

    def hat(Xa, Ya):
        H, (Gx, Gy), _ = _psi_from(H_fn, Gamma_fn, Xa, Ya, h)
        Hx = (H_fn(Xa + h, Ya) - H_fn(Xa - h, Ya)) / (2 * h)
        Hy = (H_fn(Xa, Ya + h) - H_fn(Xa, Ya - h)) / (2 * h)
        return (np.linalg.solve(H, Hx - dagger(Gx) @ H), np.linalg.solve(H, Hy - dagger(Gy) @ H))

    hx, hy = hat(X, Y)
    dxhy = (hy[2:, 1:-1] - hy[:-2, 1:-1]) / (2 * h)
    dyhx = (hx[1:-1, 2:] - hx[1:-1, :-2]) / (2 * h)
    F = dxhy - dyhx + comm(hx[1:-1, 1:-1], hy[1:-1, 1:-1])
    return float(np.max(np.abs(F)))


# ---------------------------------------------------------------------------------------------
# random smooth test data
# ---------------------------------------------------------------------------------------------

def _trig_poly(rng, n, modes, amp):
    """Random y-periodic matrix trig polynomial with sup operator norm at most amp."""
    ks = [(p, q) for p in range(-modes, modes + 1) for q in range(-modes, modes + 1)]
    coef = {k: (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
            / (1 + k[0] ** 2 + k[1] ** 2) for k in ks}
    # scale so that amp bounds the operator norm of the sum everywhere
    total = sum(np.linalg.norm(c, 2) for c in coef.values())
    coef = {k: c * (amp / total) for k, c in coef.items()}

    def value(X, Y, dx=0, dy=0):
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape + (n, n), dtype=complex)
        for (p, q), c in coef.items():
            ph = np.exp(1j * (0.5 * p * X + q * Y))
            fac = (0.5j * p) ** dx * (1j * q) ** dy
            out += (fac * ph)[..., None, None] * c
        return out

    return value


def random_smooth_metric(rng, n: int, modes: int = 2, amp: float = 0.6):
    """Callable (x, y) -> Hermitian positive-definite n x n matrices, smooth and y-periodic."""
    A = _trig_poly(rng, n, modes, amp)

    def H(X, Y):
        a = np.eye(n) + A(X, Y)
        return a @ dagger(a) + 0.25 * np.eye(n)

    return H


def random_flat_connection(rng, n: int, modes: int = 2, amp: float = 0.3, B=None,
                           curvature: float = 0.0):
    """Callable (x, y) -> (Gamma_x, Gamma_y), a gauge transform of d + B dy.

    ``curvature`` adds ``curvature * x * M`` to Gamma_y, which makes it
    non-flat (negative control).
    """
    M = _trig_poly(rng, n, modes, amp)
    B = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * 0.3 if B is None else B
    C = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))

    def Gamma(X, Y):
        g = np.eye(n) + M(X, Y)
        gi = np.linalg.inv(g)
        gx = gi @ M(X, Y, dx=1)
        gy = gi @ M(X, Y, dy=1) + gi @ B @ g
        if curvature:
            gy = gy + curvature * np.asarray(X)[..., None, None] * C
        return gx, gy

    return Gamma


# ---------------------------------------------------------------------------------------------
# uniqueness
# ---------------------------------------------------------------------------------------------

def uniqueness_compare(H1, H2, grid=None):
    """(lambda, deviation): lambda = geometric mean of eig(H1^{-1}H2) over interior rows."""
    A = _values(H1)
    B = _values(H2)
    if A.shape != B.shape:
        raise ValidationError("uniqueness_compare needs fields on the same grid")
    R = np.linalg.solve(A, B)
    inner = R[1:-1] if R.ndim == 4 else R
    ev = np.linalg.eigvals(inner).real
    lam = float(np.exp(np.mean(np.log(ev))))
    dev = float(np.max(np.linalg.norm(R - lam * np.eye(R.shape[-1]), ord=2, axis=(-2, -1))))
    return lam, dev
