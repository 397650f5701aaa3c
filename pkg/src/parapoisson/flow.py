"""Heat flow for the Poisson metric equation, rho-continuation and destabilizers.

The flow ``H^{-1} dH/dt = -(K(H) - cI)`` is run with Dirichlet data equal to
the model metric on the two boundary rows.  Each step is written in the
frame where the current metric is the identity: with ``g = H^{-1/2}`` the
update is ``H <- H^{1/2} exp(Z) H^{1/2}`` for a Hermitian ``Z``.  Two
choices of ``Z`` are offered:

* ``explicit``: ``Z = -dt S`` with ``S = H^{1/2}(K - c)H^{-1/2}``;
* ``implicit`` (default): ``(E - dt/4 L) Z = -dt E S`` with ``L`` the
  linearized covariant Laplacian, coefficients averaged in y, solved by FFT
  in y and a block-tridiagonal sweep in x.

Both have the same fixed points.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bundle import FlatBundleSpec, FlatSubbundleSpec, enumerate_flat_subbundles, slope
from .curvature import POSITIVITY_FLOOR, _check_positive, curvature_interior
from .errors import NoCandidate, NoConvergence, SingularH, StepCollapse, ValidationError
from .fields import EndomorphismField, MetricField
from .geometry import ConformalPreset, CylinderGrid, build_grid
from .kernels import block_tridiag_solve
from .linalg import ad_matrix, comm, dagger, hexp, herm
from .model import ModelSetup, build_model_metric, connection, prepare_model

SCHEMES = ("implicit", "explicit")
KAPPA_CFL = 0.2
DEFAULT_SIGMAS = (1.0, 0.5, 0.25, 0.1, 0.05)


# ---------------------------------------------------------------------------------------------
# curvature and monitors
# ---------------------------------------------------------------------------------------------

def curvature_K(H, setup: ModelSetup, conn=None, frame: str = "unitary") -> EndomorphismField:
    """K(H) at every node; the two boundary rows carry cI by convention."""
    conn = conn or connection(setup, frame)
    values = H.values if hasattr(H, "values") else np.asarray(H)
    n = setup.n
    out = np.empty(setup.grid.shape + (n, n), dtype=complex)
    out[[0, -1]] = setup.c * np.eye(n)
    out[1:-1] = curvature_interior(values, conn, setup.E.values)
    return EndomorphismField(setup.grid, frame, out)


def _sqrt_pair(H):
    w, v = _check_positive(H)
    s = np.sqrt(w)
    return (v * s[..., None, :]) @ dagger(v), (v * (1 / s)[..., None, :]) @ dagger(v)


def _normalized_residual(H, K, c, hs=None, his=None):
    """S = H^{1/2}(K - c)H^{-1/2} on interior rows (Hermitian up to discretization)."""
    if hs is None:
        hs, his = _sqrt_pair(H)
    n = K.shape[-1]
    return herm(hs[1:-1] @ (K - c * np.eye(n)) @ his[1:-1])


def model_diagonal(setup: ModelSetup, frame: str) -> np.ndarray:
    """Diagonal of H0 in ``frame``; shape (Nx+1, Ny, n)."""
    return np.exp(setup.log_temporal + 2 * setup.log_gauge(frame))


def relative_endomorphism(H, setup: ModelSetup, frame: str) -> np.ndarray:
    """h = H0^{-1} H, brought to the unitary frame so it is Hermitian."""
    d = np.sqrt(model_diagonal(setup, frame))
    return H / (d[..., :, None] * d[..., None, :])


def dual_energy(h, setup: ModelSetup) -> float:
    """int |d h + [Omega_hat, h]|^2 dx dy with the H0-dual connection (unitary frame)."""
    g = setup.grid
    conn = connection(setup, "unitary")
    hx = np.gradient(h, g.dx, axis=0, edge_order=2)
    hy = (np.roll(h, -1, 1) - np.roll(h, 1, 1)) / (2 * g.dy)
    dx_, dy_ = conn.dual()
    dens = (np.sum(np.abs(hx + comm(dx_, h)) ** 2, axis=(-2, -1))
            + np.sum(np.abs(hy + comm(dy_, h)) ** 2, axis=(-2, -1)))
    return float(np.sum(g.x_weights()[:, None] * dens) * g.dy)


def _monitors(t, dt, H, S, setup, frame):
    h = relative_endomorphism(H, setup, frame)
    E = setup.E.values[1:-1, :, None, None]
    det = np.linalg.det(h).real
    return {
        "t": t,
        "dt": dt,
        "sup_residual": float(np.max(np.linalg.norm(S, axis=(-2, -1)))),
        "sup_residual_weighted": float(np.max(np.linalg.norm(E * S, axis=(-2, -1)))),
        "sup_trace": float(np.max(np.trace(h, axis1=-2, axis2=-1).real)),
        "det_deviation": float(np.max(np.abs(det - 1.0))),
        "energy": dual_energy(h, setup),
    }


# ---------------------------------------------------------------------------------------------
# a single step
# ---------------------------------------------------------------------------------------------

def _implicit_direction(H, S, conn, setup: ModelSetup, dt, hs, his):
    g = setup.grid
    n = setup.n
    m = n * n
    wx_g = np.gradient(his, g.dx, axis=0, edge_order=2)
    wy_g = (np.roll(his, -1, 1) - np.roll(his, 1, 1)) / (2 * g.dy)
    wx = (hs @ wx_g + hs @ conn.ox @ his).mean(axis=1)
    wy = (hs @ wy_g + hs @ conn.oy @ his).mean(axis=1)
    ax, axh = ad_matrix(wx), ad_matrix(-dagger(wx))
    ay, ayh = ad_matrix(wy), ad_matrix(-dagger(wy))
    axh_d = np.gradient(axh, g.dx, axis=0, edge_order=2)
    sl = slice(1, -1)
    eye = np.eye(m)
    sx = (ax + axh)[sl]
    coef = dt / (4 * setup.E.values[1:-1].mean(axis=1))[:, None, None]
    lower = -coef * (eye / g.dx ** 2 - sx / (2 * g.dx))
    upper = -coef * (eye / g.dx ** 2 + sx / (2 * g.dx))
    base = -2 * eye / g.dx ** 2 + axh_d[sl] + ax[sl] @ axh[sl] + ay[sl] @ ayh[sl]
    modes = np.fft.fftfreq(g.Ny, d=1.0 / g.Ny)
    cn = 4 * np.sin(0.5 * modes * g.dy) ** 2 / g.dy ** 2
    sn = np.sin(modes * g.dy) / g.dy
    ysum = (ay + ayh)[sl]
    diag = (eye - coef * base)[None] - coef[None] * (
        -cn[:, None, None, None] * eye + 1j * sn[:, None, None, None] * ysum[None])
    rhs = np.fft.fft((-dt * S).reshape(g.Nx - 1, g.Ny, m), axis=1).transpose(1, 0, 2)
    sol = block_tridiag_solve(lower, diag, upper, rhs)
    Z = np.fft.ifft(sol.transpose(1, 0, 2), axis=1).reshape(g.Nx - 1, g.Ny, n, n)
    return herm(Z)


def _apply(H, Z, hs, det_renormalize=False):
    out = H.copy()
    inner = hs[1:-1] @ hexp(Z) @ hs[1:-1]
    if det_renormalize:
        det = np.linalg.det(inner).real / np.linalg.det(H[1:-1]).real
        inner = inner / det[..., None, None] ** (1.0 / H.shape[-1])
    out[1:-1] = herm(inner)
    return out


@dataclass
class FlowState:
    H: np.ndarray
    t: float
    dt: float
    K: np.ndarray
    S: np.ndarray
    monitors: dict = field(default_factory=dict)


def initial_state(setup: ModelSetup, frame="unitary", h=None, dt=None, conn=None) -> FlowState:
    """State at t = 0 with H = H0 (or H0^{1/2} h H0^{1/2} for a supplied h, unitary frame)."""
    conn = conn or connection(setup, frame)
    H = build_model_metric(setup.bundle, setup.grid, frame=frame, setup=setup).values
    if h is not None:
        h = np.asarray(h, dtype=complex)
        if h.shape != H.shape:
            raise ValidationError(f"initial h has shape {h.shape}, expected {H.shape}")
        d = np.sqrt(model_diagonal(setup, frame))
        H = herm(d[..., :, None] * h * d[..., None, :])
        H[[0, -1]] = build_model_metric(setup.bundle, setup.grid, frame=frame,
                                        setup=setup).values[[0, -1]]
    K = curvature_interior(H, conn, setup.E.values)
    S = _normalized_residual(H, K, setup.c)
    dt = default_dt(setup, "implicit") if dt is None else dt
    st = FlowState(H, 0.0, dt, K, S)
    st.monitors = _monitors(0.0, dt, H, S, setup, frame)
    return st


def bump_perturbation(grid: CylinderGrid, n: int, amp: float) -> np.ndarray:
    """exp(A) with A Hermitian, smooth, vanishing on the boundary rows.

    For n > 1 the perturbation is trace free, so det h = 1 at the start.
    """
    xx, yy = grid.mesh()
    bump = amp * np.cos(0.5 * np.pi * xx / grid.X) * (1 + 0.5 * np.cos(yy))
    bump[[0, -1]] = 0.0
    A = np.zeros(grid.shape + (n, n), dtype=complex)
    if n == 1:
        A[..., 0, 0] = bump
    else:
        signs = np.array([1.0 if k % 2 == 0 else -1.0 for k in range(n)])
        if n % 2:
            signs[-1] = 0.0
        A[..., range(n), range(n)] = bump[..., None] * signs
        A[..., 0, 1] = 0.3 * bump * np.sin(yy)
        A[..., 1, 0] = np.conj(A[..., 0, 1])
    return hexp(A)


def default_dt(setup: ModelSetup, scheme: str) -> float:
    g = setup.grid
    if scheme == "explicit":
        return KAPPA_CFL * float(np.min(setup.E.values)) * min(g.dx, g.dy) ** 2
    return 1e-2


def flow_step(state: FlowState, setup: ModelSetup, conn, scheme="implicit", dt=None,
              det_renormalize=False, frame="unitary") -> FlowState:
    """One trial step of size ``dt`` (default ``state.dt``); raises SingularH on positivity loss."""
    if scheme not in SCHEMES:
        raise ValidationError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    dt = state.dt if dt is None else dt
    hs, his = _sqrt_pair(state.H)
    S = state.S
    if scheme == "explicit":
        Z = -dt * S
    else:
        Z = _implicit_direction(state.H, S, conn, setup, dt, hs, his)
    if not np.all(np.isfinite(Z)):
        raise SingularH("non-finite update")
    if np.min(np.linalg.eigvalsh(Z)) < math.log(POSITIVITY_FLOOR):
        raise SingularH("update pushes an eigenvalue below the positivity floor")
    H = _apply(state.H, Z, hs, det_renormalize)
    K = curvature_interior(H, conn, setup.E.values)
    S_new = _normalized_residual(H, K, setup.c)
    t = state.t + dt
    out = FlowState(H, t, dt, K, S_new)
    out.monitors = _monitors(t, dt, H, S_new, setup, frame)
    return out


# ---------------------------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------------------------

@dataclass
class FlowReport:
    converged: bool
    final_residual: float
    decay_rate: float | None
    monitors: list
    wall_clock: float
    steps: int
    rejected: int
    scheme: str
    frame: str
    c: float
    grid: dict
    tol: float
    state: FlowState | None = None
    setup: ModelSetup | None = None
    continuation: list | None = None
    verdict: str | None = None
    destabilizer: dict | None = None

    @property
    def h(self) -> np.ndarray:
        return relative_endomorphism(self.state.H, self.setup, self.frame)

    def to_dict(self, include_series=True) -> dict:
        out = {
            "schema": "parapoisson.flow-report/1",
            "converged": self.converged,
            "final_residual": self.final_residual,
            "decay_rate": self.decay_rate,
            "steps": self.steps,
            "rejected": self.rejected,
            "scheme": self.scheme,
            "frame": self.frame,
            "c": self.c,
            "grid": self.grid,
            "tol": self.tol,
            "wall_clock": self.wall_clock,
        }
        if include_series:
            out["monitors"] = self.monitors
        if self.continuation is not None:
            out["continuation"] = self.continuation
            out["verdict"] = self.verdict
        if self.destabilizer is not None:
            out["destabilizer"] = self.destabilizer
        return out


def decay_rate_fit(monitors) -> float | None:
    """Rate eps in sup|K - c|^2 ~ A exp(-eps t), least squares over accepted steps."""
    pts = [(m["t"], m["sup_residual"]) for m in monitors if m["sup_residual"] > 0]
    if len(pts) < 3:
        return None
    t, r = np.array(pts).T
    slope_, _ = np.polyfit(t, np.log(r ** 2), 1)
    return float(-slope_)


def run_flow(bundle: FlatBundleSpec, grid: CylinderGrid, preset: ConformalPreset | None = None,
             tol: float = 1e-6, t_max: float = 1e8, *, scheme: str = "implicit",
             frame: str = "unitary", h_init=None, dt0: float | None = None,
             dt_max: float = 1e6, grow: float = 2.0, max_steps: int = 2000,
             monotone: bool = False, det_renormalize: bool = False, fixed_dt: bool = False,
             setup: ModelSetup | None = None, raise_on_failure: bool = True) -> FlowReport:
    """Flow from H0 (or a supplied h) until sup|K - cI| < tol.

    Step control: a trial step is rejected and dt halved when positivity is
    lost or, with ``monotone``, when sup|K - cI|^2 would grow; accepted steps
    grow dt by ``grow`` up to ``dt_max``.  ``fixed_dt`` disables both.
    """
    start = time.perf_counter()
    setup = setup or prepare_model(bundle, grid, preset)
    conn = connection(setup, frame)
    if dt0 is None:
        dt0 = default_dt(setup, scheme)
    if scheme == "explicit":
        dt_max = min(dt_max, default_dt(setup, "explicit"))
    state = initial_state(setup, frame, h_init, dt0, conn)
    series = [state.monitors]
    rejected = 0
    steps = 0
    dt_min = dt0 * 1e-12
    while state.monitors["sup_residual"] >= tol and state.t < t_max and steps < max_steps:
        dt = min(state.dt, t_max - state.t) if not fixed_dt else state.dt
        try:
            trial = flow_step(state, setup, conn, scheme, dt, det_renormalize, frame)
            ok = np.isfinite(trial.monitors["sup_residual"])
            if ok and monotone and not fixed_dt:
                r0 = state.monitors["sup_residual"] ** 2
                ok = trial.monitors["sup_residual"] ** 2 <= r0 * (1 + 1e-10)
        except SingularH:
            if fixed_dt:
                raise
            ok = False
        if not ok:
            rejected += 1
            state.dt = dt / 2
            if state.dt < dt_min:
                raise StepCollapse(f"time step collapsed below {dt_min:.3e} at t={state.t:.6g}")
            continue
        steps += 1
        trial.dt = dt if fixed_dt else min(dt * grow, dt_max)
        state = trial
        series.append(state.monitors)
    converged = state.monitors["sup_residual"] < tol
    report = FlowReport(
        converged=bool(converged), final_residual=state.monitors["sup_residual"],
        decay_rate=decay_rate_fit(series), monitors=series,
        wall_clock=time.perf_counter() - start, steps=steps, rejected=rejected,
        scheme=scheme, frame=frame, c=setup.c, grid=grid.to_dict(), tol=tol,
        state=state, setup=setup)
    if not converged and raise_on_failure:
        raise NoConvergence(f"sup|K - cI| = {report.final_residual:.3e} after {steps} steps "
                            f"(t = {state.t:.4g}); tolerance {tol:g}", report)
    return report


def solve_bvp(bundle, grid, preset=None, tol=1e-6, **kw) -> FlowReport:
    return run_flow(bundle, grid, preset, tol, **kw)


def write_monitor_csv(report: FlowReport, path) -> None:
    keys = ["t", "dt", "sup_residual", "sup_residual_weighted", "sup_trace", "det_deviation",
            "energy"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for m in report.monitors:
            w.writerow([repr(float(m[k])) for k in keys])


def write_report_json(report: FlowReport, path, include_series=False) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(include_series), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------------------------
# rho-continuation
# ---------------------------------------------------------------------------------------------

def extend_by_identity(h: np.ndarray, old: CylinderGrid, new: CylinderGrid) -> np.ndarray:
    """Carry h (unitary frame) onto a longer grid with the same Ny, padding with I.

    Inside the old range h is linearly interpolated in x; convex combinations of
    positive definite matrices stay positive definite.
    """
    if old.Ny != new.Ny or new.X < old.X:
        raise ValidationError("continuation grids must share Ny and grow in X")
    n = h.shape[-1]
    out = np.broadcast_to(np.eye(n, dtype=complex), new.shape + (n, n)).copy()
    inside = np.abs(new.x) <= old.X + 1e-12
    pos = np.clip((new.x[inside] + old.X) / old.dx, 0.0, old.Nx)
    i0 = np.minimum(np.floor(pos).astype(int), old.Nx - 1)
    w = (pos - i0)[:, None, None, None]
    out[inside] = (1 - w) * h[i0] + w * h[i0 + 1]
    return out


def continuation_grids(X_schedule, dx: float, Ny: int) -> list[CylinderGrid]:
    xs = [float(v) for v in X_schedule]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValidationError("X-schedule must be strictly increasing")
    grids = []
    for X in xs:
        nx = 2 * X / dx
        if abs(nx - round(nx)) > 1e-6:
            raise ValidationError(f"X={X} is not a multiple of dx/2={dx / 2}")
        grids.append(build_grid(X, int(round(nx)), Ny))
    return grids


def plateau_verdict(m_values, threshold=0.01) -> str:
    if len(m_values) < 2:
        return "bounded"
    rel = (m_values[-1] - m_values[-2]) / abs(m_values[-2])
    return "bounded" if rel < threshold else "unbounded-trend"


def rho_continuation(bundle: FlatBundleSpec, X_schedule, preset: ConformalPreset | None = None,
                     tol: float = 1e-6, *, dx: float = 0.08, Ny: int = 32,
                     plateau: float = 0.01, keep_fields: bool = True, **flow_kw) -> FlowReport:
    """Solve the boundary value problem on growing cylinders; track m_k = sup Tr h."""
    start = time.perf_counter()
    table = []
    fields_ = []
    h_prev, g_prev, rep = None, None, None
    for g in continuation_grids(X_schedule, dx, Ny):
        h0 = None if h_prev is None else extend_by_identity(h_prev, g_prev, g)
        try:
            rep = run_flow(bundle, g, preset, tol, h_init=h0, **flow_kw)
        except NoConvergence as exc:
            partial = exc.report
            partial.continuation = table
            raise NoConvergence(f"continuation failed at X={g.X}: {exc}", partial) from exc
        h = rep.h
        tr = np.trace(h, axis1=-2, axis2=-1).real
        i, j = np.unravel_index(np.argmax(tr), tr.shape)
        table.append({"X": g.X, "rho": math.exp(-g.X), "m": float(tr[i, j]),
                      "argmax_x": float(g.x[i]), "steps": rep.steps,
                      "residual": rep.final_residual})
        if keep_fields:
            fields_.append((g, h))
        h_prev, g_prev = h, g
    rep.continuation = table
    rep.verdict = plateau_verdict([r["m"] for r in table], plateau)
    rep.wall_clock = time.perf_counter() - start
    rep.fields = fields_
    return rep


def write_continuation_csv(report: FlowReport, path) -> None:
    keys = ["X", "rho", "m", "argmax_x", "steps", "residual"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for row in report.continuation:
            w.writerow([repr(float(row[k])) for k in keys])


# ---------------------------------------------------------------------------------------------
# destabilizer
# ---------------------------------------------------------------------------------------------

@dataclass
class Destabilizer:
    projection: np.ndarray
    rank: int
    sigma: float
    gap: float
    idempotency: float
    rounding_defect: float
    flatness: float
    subbundle: FlatSubbundleSpec
    slope: float
    mu: float
    mismatch: float

    def to_dict(self) -> dict:
        return {"rank": self.rank, "sigma": self.sigma, "gap": self.gap,
                "idempotency": self.idempotency, "rounding_defect": self.rounding_defect,
                "flatness": self.flatness, "subbundle": self.subbundle.to_dict(),
                "slope": self.slope, "mu": self.mu, "mismatch": self.mismatch}


def _projection_flatness(pi_core, setup: ModelSetup, rows) -> float:
    """Integral of |pi dual-nabla (I - pi)|^2 over the core rows (unitary frame, H0 = I)."""
    g = setup.grid
    dx_, dy_ = connection(setup, "unitary").dual()
    dx_, dy_ = dx_[rows], dy_[rows]
    q = np.eye(pi_core.shape[-1]) - pi_core
    qx = np.gradient(q, g.dx, axis=0, edge_order=2)
    qy = (np.roll(q, -1, 1) - np.roll(q, 1, 1)) / (2 * g.dy)
    fx = pi_core @ (qx + comm(dx_, q))
    fy = pi_core @ (qy + comm(dy_, q))
    dens = np.sum(np.abs(fx) ** 2 + np.abs(fy) ** 2, axis=(-2, -1))
    return float(np.sum(dens) * g.dx * g.dy)


def extract_destabilizer(h: np.ndarray, setup: ModelSetup, sigmas=DEFAULT_SIGMAS,
                         threshold: float = 0.5, min_gap: float = 0.2,
                         core: float = 3.0) -> Destabilizer:
    """Uhlenbeck-Yau candidate from a (large) h in the unitary frame.

    ``P = I - (h/m)^sigma`` with ``m = sup Tr h``; over the core region
    ``|x| <= core`` the eigenvalues of ``P`` must split into two clusters with
    a gap of at least ``min_gap`` and constant count above ``threshold``.
    The sigma giving the widest gap is used; eigenvalues are then rounded
    to {0, 1}.
    """
    g = setup.grid
    n = h.shape[-1]
    mask_rows = np.abs(g.x) <= core
    if not mask_rows.any():
        raise ValidationError("core region is empty")
    hc = herm(h[mask_rows])
    m = float(np.max(np.trace(h, axis1=-2, axis2=-1).real))
    w, v = np.linalg.eigh(hc / m)
    if np.min(w) <= 0:
        raise SingularH("h is not positive definite in the core")
    best = None
    for s in sorted(sigmas, reverse=True):
        p = 1 - w ** s
        hi = p > threshold
        counts = hi.sum(axis=-1)
        if counts.min() != counts.max() or counts[0, 0] in (0, n):
            continue
        gap = float(np.min(np.where(hi, p, np.inf)) - np.max(np.where(hi, -np.inf, p)))
        if best is None or gap > best[1]:
            best = (s, gap, int(counts[0, 0]))
    if best is None or best[1] < min_gap:
        raise NoCandidate("eigenvalues of I - (h/m)^sigma do not separate into two clusters")
    s, gap, rank = best
    p = 1 - w ** s
    P = (v * p[..., None, :]) @ dagger(v)
    sel = (p > threshold).astype(float)
    pi_core = (v * sel[..., None, :]) @ dagger(v)
    pi = np.zeros(g.shape + (n, n), dtype=complex)
    pi[mask_rows] = pi_core
    flat = _projection_flatness(pi_core, setup, mask_rows)
    bundle = setup.bundle
    sub, mismatch = nearest_block_projection(bundle, pi_core, rank)
    return Destabilizer(
        projection=pi, rank=rank, sigma=s, gap=gap,
        idempotency=float(np.max(np.abs(pi_core @ pi_core - pi_core))),
        rounding_defect=float(np.max(np.abs(P - pi_core))),
        flatness=flat, subbundle=sub, slope=slope(bundle, sub), mu=slope(bundle),
        mismatch=mismatch)


def nearest_block_projection(bundle: FlatBundleSpec, pi_core, rank: int):
    """Block-aligned flat subbundle of the given rank whose coordinate projection is closest."""
    best = None
    for sub in enumerate_flat_subbundles(bundle):
        if sub.global_rank != rank:
            continue
        d = np.diag(bundle.projection_diagonal(sub)).astype(complex)
        err = float(np.max(np.abs(pi_core - d)))
        if best is None or err < best[1]:
            best = (sub, err)
    if best is None:
        raise NoCandidate(f"no block-aligned flat subbundle of rank {rank}")
    return best
