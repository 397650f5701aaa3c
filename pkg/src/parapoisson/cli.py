"""``pg``: command line front end.

Each subcommand reads one scenario file, writes its artifacts into
``<out>/<command>/`` together with a ``manifest.json`` naming the schema of
every file, and prints a one-line JSON summary.  Output directory precedence:
``--out``, then ``$POISSON_OUT``, then ``outputs.directory``, then ``pg-out``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, flow, oracles
from .bundle import (FlatSubbundleSpec, enumerate_flat_subbundles, parabolic_degree, slope,
                     stability_classify)
from .config import ORACLES, ScenarioConfig, parse_config
from .errors import PoissonError, ValidationError
from .fields import EndomorphismField, write_matrix_csv
from .geometry import ScalarField, write_scalar_csv
from .model import BLEND_OUTER, build_model_metric, model_residual, prepare_model

COMMANDS = ("degree", "stability", "model", "flow", "continuation", "analyze", "extract", "oracle")


class Run:
    """Output bookkeeping for one command."""

    def __init__(self, cfg: ScenarioConfig, command: str, out: str | None, seed: int,
                 config_bytes: bytes):
        base = out or os.environ.get("POISSON_OUT") or cfg.outputs["directory"] or "pg-out"
        self.cfg = cfg
        self.command = command
        self.seed = seed
        self.dir = Path(base) / command
        self.files: dict[str, str] = {}
        self.config_sha = hashlib.sha256(config_bytes).hexdigest()

    def path(self, name: str, schema: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files[name] = schema
        return self.dir / name

    def json(self, name: str, payload: dict) -> None:
        payload = dict(payload)
        schema = payload.setdefault("schema", f"parapoisson.{Path(name).stem}/1")
        _dump(self.path(name, schema), payload)

    def matrix(self, name: str, field, extra=None) -> None:
        write_matrix_csv(field, self.path(name, "parapoisson.matrix-field/1"), extra)
        self.files[name + ".json"] = "parapoisson.matrix-field/1"

    def rows(self, name: str, schema: str, header, rows) -> None:
        with open(self.path(name, schema), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(v) for v in r])

    def finish(self) -> None:
        if not self.files:
            return
        _dump(self.dir / "manifest.json", {
            "schema": "parapoisson.manifest/1", "command": self.command, "seed": self.seed,
            "config_sha256": self.config_sha, "files": dict(sorted(self.files.items()))})


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def _dump(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _report_dict(rep, include_series=False) -> dict:
    d = rep.to_dict(include_series)
    d.pop("wall_clock", None)
    return d


def _flow_kwargs(cfg: ScenarioConfig, grid=None) -> dict:
    """run_flow keywords; a nonzero ``perturb`` becomes a bump start on ``grid``."""
    kw = dict(cfg.flow)
    kw.pop("sigmas")
    amp = kw.pop("perturb")
    if amp and grid is not None:
        kw["h_init"] = flow.bump_perturbation(grid, cfg.bundle.rank, amp)
    return kw


def _subbundle(cfg: ScenarioConfig):
    raw = cfg.analysis.get("subbundle")
    if raw is None:
        return None
    try:
        sub = FlatSubbundleSpec(raw)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"analysis.subbundle: {exc}") from None
    if sub not in enumerate_flat_subbundles(cfg.bundle):
        raise ValidationError("analysis.subbundle is not a flat subbundle of the bundle")
    return sub


# ---------------------------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------------------------

def cmd_degree(cfg: ScenarioConfig, run: Run) -> dict:
    b = cfg.bundle
    per = {p: float(sum(w * d for w, d in zip(b.parabolic[p], pres.dims)))
           for p, pres in (("zero", b.presentation_zero), ("infinity", b.presentation_infinity))}
    out = {"schema": "parapoisson.degree/1", "degree": parabolic_degree(b), "rank": b.rank,
           "slope": slope(b), "by_puncture": per}
    run.json("degree.json", out)
    return out


def cmd_stability(cfg: ScenarioConfig, run: Run) -> dict:
    b = cfg.bundle
    out = {"schema": "parapoisson.stability/1"}
    out.update(stability_classify(b).to_dict())
    out["degree"] = parabolic_degree(b)
    out["subbundles"] = [{"subbundle": s.to_dict(), "rank": s.global_rank,
                          "degree": parabolic_degree(b, s), "slope": slope(b, s)}
                         for s in enumerate_flat_subbundles(b)]
    run.json("stability.json", out)
    return out


def cmd_model(cfg: ScenarioConfig, run: Run) -> dict:
    g = cfg.final_grid
    setup = prepare_model(cfg.bundle, g, cfg.preset)
    frame = cfg.flow["frame"]
    H0 = build_model_metric(cfg.bundle, g, frame=frame, setup=setup)
    res = model_residual(setup)
    outer = np.abs(g.x) >= BLEND_OUTER
    outer[[0, -1]] = False
    deg = analysis.degree_via_curvature(H0, setup, frame=frame)
    run.matrix("metric.csv", H0, {"c": setup.c})
    write_scalar_csv(res, run.path("residual.csv", "parapoisson.scalar-field/1"))
    summary = {
        "schema": "parapoisson.model/1", "frame": frame, "grid": g.to_dict(), "c": setup.c,
        "sup_residual": float(np.max(res.values)),
        "sup_residual_outer": float(np.max(res.values[outer])) if outer.any() else 0.0,
        "u_range": [float(np.min(setup.u.values)), float(np.max(setup.u.values))],
        "degree_estimate": deg.to_dict(), "degree": parabolic_degree(cfg.bundle),
    }
    run.json("model.json", summary)
    return summary


def _flow_outputs(run: Run, rep, name="flow") -> None:
    reports = run.cfg.outputs["reports"]
    run.json(f"{name}.json", _report_dict(rep))
    if "monitors" in reports:
        flow.write_monitor_csv(rep, run.path("monitors.csv", "parapoisson.monitors/1"))
    if "metric" in reports:
        run.matrix("h.csv", EndomorphismField(rep.setup.grid, "unitary", rep.h))
    if "profile" in reports:
        prof = analysis.gradient_decay_profile(rep.h, rep.setup.grid)
        analysis.write_profile_csv(prof, run.path("profile.csv", "parapoisson.decay-profile/1"))


def cmd_flow(cfg: ScenarioConfig, run: Run) -> dict:
    rep = flow.run_flow(cfg.bundle, cfg.final_grid, cfg.preset,
                         **_flow_kwargs(cfg, cfg.final_grid))
    _flow_outputs(run, rep)
    return {"schema": "parapoisson.flow-summary/1", "converged": rep.converged,
            "final_residual": rep.final_residual, "tol": rep.tol, "steps": rep.steps,
            "decay_rate": rep.decay_rate, "c": rep.c,
            "det_deviation": max(m["det_deviation"] for m in rep.monitors)}


def _continuation(cfg: ScenarioConfig):
    # a single grid is a one-step schedule
    sched, dx = (cfg.X_schedule, cfg.dx) if cfg.grid is None else ([cfg.grid.X], cfg.grid.dx)
    kw = _flow_kwargs(cfg)
    return flow.rho_continuation(cfg.bundle, sched, cfg.preset, kw.pop("tol"),
                                 dx=dx, Ny=cfg.Ny, **kw)


def _continuation_outputs(run: Run, rep) -> None:
    flow.write_continuation_csv(rep, run.path("continuation.csv", "parapoisson.continuation/1"))
    run.json("continuation.json", _report_dict(rep))


def cmd_continuation(cfg: ScenarioConfig, run: Run) -> dict:
    rep = _continuation(cfg)
    _continuation_outputs(run, rep)
    ms = [r["m"] for r in rep.continuation]
    return {"schema": "parapoisson.continuation-summary/1", "verdict": rep.verdict,
            "m": ms, "X": [r["X"] for r in rep.continuation],
            "stability": stability_classify(cfg.bundle).cls}


def cmd_extract(cfg: ScenarioConfig, run: Run) -> dict:
    rep = _continuation(cfg)
    g, h = rep.fields[-1]
    d = flow.extract_destabilizer(h, rep.setup, sigmas=tuple(cfg.flow["sigmas"]))
    rep.destabilizer = d.to_dict()
    _continuation_outputs(run, rep)
    run.matrix("projection.csv", EndomorphismField(g, "unitary", d.projection))
    out = {"schema": "parapoisson.destabilizer/1", "verdict": rep.verdict}
    out.update(d.to_dict())
    run.json("destabilizer.json", out)
    return out


def _identity_checks(n: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    H = analysis.random_smooth_metric(rng, n)
    G = analysis.random_flat_connection(rng, n)
    out = {}
    for name, fn in (("hym_lift", analysis.hym_lift_check),
                     ("dual_flatness", analysis.dual_flatness_check)):
        coarse, fine = fn(H, G, h=0.02), fn(H, G, h=0.01)
        out[name] = {"residual": coarse, "residual_refined": fine,
                     "ratio": coarse / fine if fine > 0 else None}
    return out


def _fourier_checks(cfg: ScenarioConfig, seed: int, count: int = 20) -> dict:
    rng = np.random.default_rng(seed)
    lams = sorted({round(b.kappa.imag, 12) for b in cfg.bundle.blocks} | {0.5})
    worst = math.inf
    holds = True
    for lam in lams:
        for _ in range(count):
            k = rng.integers(-4, 5, size=6)
            coef = rng.standard_normal(6) + 1j * rng.standard_normal(6)
            y = 2 * np.pi * np.arange(32) / 32
            g = (coef[:, None] * np.exp(1j * np.outer(k, y))).sum(axis=0)
            r = analysis.fourier_gap(g, lam)
            holds &= r["holds"]
            worst = min(worst, r["ratio"] - r["gap"])
    return {"lambdas": lams, "samples_per_lambda": count, "holds": bool(holds),
            "min_margin": worst}


def cmd_analyze(cfg: ScenarioConfig, run: Run) -> dict:
    g = cfg.final_grid
    frame = "unitary"
    source = cfg.analysis["source"]
    setup = prepare_model(cfg.bundle, g, cfg.preset)
    if source == "flow":
        rep = flow.run_flow(cfg.bundle, g, cfg.preset, setup=setup, **_flow_kwargs(cfg, g))
        H = rep.state.H if rep.frame == frame else None
        if H is None:
            raise ValidationError("analysis.source=flow needs flow.frame = unitary")
        h = rep.h
    else:
        H = build_model_metric(cfg.bundle, g, frame=frame, setup=setup).values
        h = None
    K = flow.curvature_K(H, setup, frame=frame).values
    deg = analysis.degree_via_curvature(H, setup, frame=frame, K=K)
    subs = [_subbundle(cfg)] if cfg.analysis["subbundle"] else list(enumerate_flat_subbundles(cfg.bundle))
    cw = []
    for s in subs:
        est = analysis.chern_weil_degree(H, setup, s, frame=frame, K=K)
        cw.append({"subbundle": s.to_dict(), "chern_weil": est.value,
                   "combinatorial": parabolic_degree(cfg.bundle, s),
                   "error": est.value - parabolic_degree(cfg.bundle, s)})
    window = cfg.analysis["window"]
    tame = analysis.tameness_report(H, setup, frame=frame,
                                    window=tuple(window) if window else None,
                                    min_nodes=cfg.analysis["min_nodes"])
    run.json("tameness.json", tame.to_dict())
    if h is not None and "profile" in cfg.outputs["reports"]:
        prof = analysis.gradient_decay_profile(h, g)
        analysis.write_profile_csv(prof, run.path("profile.csv", "parapoisson.decay-profile/1"))
    summary = {
        "schema": "parapoisson.analysis/1", "source": source, "seed": run.seed,
        "degree": parabolic_degree(cfg.bundle), "degree_estimate": deg.to_dict(),
        "degree_error": deg.value - parabolic_degree(cfg.bundle),
        "chern_weil": cw, "tameness_passed": tame.passed,
        "identities": _identity_checks(cfg.bundle.rank, run.seed),
        "fourier_gap": _fourier_checks(cfg, run.seed),
    }
    run.json("analysis.json", summary)
    return {k: summary[k] for k in ("schema", "source", "degree", "degree_error",
                                    "tameness_passed")} | {
        "degree_estimate": deg.value,
        "chern_weil_max_error": max((abs(r["error"]) for r in cw), default=0.0)}


def _oracle_rank1(cfg: ScenarioConfig, run: Run) -> dict:
    g = cfg.final_grid
    setup = prepare_model(cfg.bundle, g, cfg.preset)
    ref = oracles.rank1_oracle(setup)
    rep = flow.run_flow(cfg.bundle, g, cfg.preset, setup=setup, **_flow_kwargs(cfg, g))
    h = rep.h[..., 0, 0].real
    diff = np.abs(h - ref)
    run.rows("rank1.csv", "parapoisson.oracle-rank1/1", ["x", "flow", "oracle", "abs_diff"],
             [(x, h[i, 0], ref[i, 0], float(np.max(diff[i]))) for i, x in enumerate(g.x)])
    return {"which": "rank1", "max_diff": float(np.max(diff)), "flow_steps": rep.steps,
            "flow_residual": rep.final_residual}


def _oracle_radial(cfg: ScenarioConfig, run: Run) -> dict:
    dims = sorted({d for d in cfg.bundle.dims if d > 1}) or [2]
    rows, worst = [], {}
    for d in dims:
        t, num, closed = oracles.radial_ode_oracle(d)
        rel = np.abs(num - closed) / np.abs(closed)
        worst[str(d)] = float(np.max(rel))
        for k, tv in enumerate(t):
            for i in range(d):
                rows.append((d, i + 1, tv, num[i, k], closed[i, k], rel[i, k]))
    run.rows("radial.csv", "parapoisson.oracle-radial/1",
             ["d", "i", "t", "numeric", "closed_form", "rel_diff"], rows)
    return {"which": "radial-ode", "max_rel_diff": worst}


def _oracle_manufactured(cfg: ScenarioConfig, run: Run) -> dict:
    table = oracles.manufactured_poisson()
    run.rows("manufactured.csv", "parapoisson.oracle-manufactured/1",
             ["Nx", "Ny", "dx", "max_error", "ratio"],
             [(r["Nx"], r["Ny"], r["dx"], r["max_error"], r.get("ratio", "")) for r in table])
    return {"which": "manufactured", "errors": [r["max_error"] for r in table],
            "ratios": [r["ratio"] for r in table[1:]]}


def cmd_oracle(cfg: ScenarioConfig, run: Run, which: str | None = None) -> dict:
    which = which or cfg.oracle
    fn = {"rank1": _oracle_rank1, "radial-ode": _oracle_radial,
          "manufactured": _oracle_manufactured}[which]
    out = {"schema": "parapoisson.oracle/1"}
    out.update(fn(cfg, run))
    run.json("oracle.json", out)
    return out


# ---------------------------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pg", description="Poisson metrics on flat parabolic bundles")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="scenario JSON file")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized checks (default 0)")
    p.add_argument("--out", default=None, help="output directory (overrides POISSON_OUT)")
    p.add_argument("--which", choices=ORACLES, default=None,
                   help="oracle to run (default: oracle.which in the config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        with open(args.config, "rb") as fh:
            raw = fh.read()
        run = Run(cfg, args.command, args.out, args.seed, raw)
        handler = globals()[f"cmd_{args.command}"]
        summary = handler(cfg, run, args.which) if args.command == "oracle" else handler(cfg, run)
        run.finish()
    except PoissonError as exc:
        print(f"pg {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code if exc.exit_code in (2, 3) else 3
    print(json.dumps(_clean(summary), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
