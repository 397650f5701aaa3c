"""Scenario files: one JSON document per experiment.

Layout::

    {
      "bundle":    {... bundle JSON ...},
      "grid":      {"X": 8, "Nx": 200, "Ny": 64}
                   or {"X_schedule": [4, 5, 6], "dx": 0.08, "Ny": 32},
      "conformal": {"preset": "fubini-study", "params": {}},
      "flow":      {"tol": 1e-6, ...},
      "analysis":  {"source": "model", "window": [5, 9], "min_nodes": 20},
      "oracle":    {"which": "rank1"},
      "outputs":   {"directory": "out", "reports": ["monitors", "metric"]}
    }

Only ``bundle`` and ``grid`` are required.  Unknown keys anywhere are errors,
and every violation found is reported at once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .bundle import FlatBundleSpec, bundle_from_dict
from .errors import ParseError, ValidationError
from .fields import FRAMES
from .flow import DEFAULT_SIGMAS, SCHEMES
from .geometry import PRESET_KINDS, ConformalPreset, CylinderGrid, build_grid

ORACLES = ("rank1", "radial-ode", "manufactured")
REPORTS = ("monitors", "metric", "residual", "continuation", "profile")

_SECTIONS = {"bundle", "grid", "conformal", "flow", "analysis", "oracle", "outputs"}
_FLOW_DEFAULTS = {
    "tol": 1e-6, "t_max": 1e8, "scheme": "implicit", "frame": "unitary", "dt0": None,
    "dt_max": 1e6, "grow": 2.0, "max_steps": 2000, "monotone": False,
    "det_renormalize": False, "fixed_dt": False, "sigmas": list(DEFAULT_SIGMAS),
    "perturb": 0.0,
}
_ANALYSIS_DEFAULTS = {"source": "model", "window": None, "min_nodes": 20, "subbundle": None}
_OUTPUT_DEFAULTS = {"directory": None, "reports": ["monitors", "continuation"]}


@dataclass(frozen=True)
class ScenarioConfig:
    bundle: FlatBundleSpec
    grid: CylinderGrid | None
    X_schedule: tuple | None
    dx: float | None
    Ny: int
    preset: ConformalPreset
    flow: dict
    analysis: dict
    oracle: str
    outputs: dict
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def grids(self) -> list[CylinderGrid]:
        """The single grid, or one grid per X in the schedule."""
        if self.grid is not None:
            return [self.grid]
        return [build_grid(X, int(round(2 * X / self.dx)), self.Ny) for X in self.X_schedule]

    @property
    def final_grid(self) -> CylinderGrid:
        return self.grids[-1]


def _unknown(section: str, given: dict, allowed, problems: list) -> None:
    for k in sorted(set(given) - set(allowed)):
        problems.append(f"{section}: unknown key {k!r}")


def _number(section, key, value, problems, *, positive=False, integer=False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)
    if ok and integer:
        ok = float(value).is_integer()
    if ok and positive:
        ok = value > 0
    if not ok:
        kind = "positive " if positive else ""
        kind += "integer" if integer else "number"
        problems.append(f"{section}.{key}: expected a {kind}, got {value!r}")
    return ok


def _parse_grid(raw, problems):
    if not isinstance(raw, dict):
        problems.append("grid: expected an object")
        return None, None, None, 8
    _unknown("grid", raw, {"X", "Nx", "Ny", "X_schedule", "dx"}, problems)
    ny = raw.get("Ny")
    if ny is None:
        problems.append("grid.Ny: required")
        ny = 8
    elif _number("grid", "Ny", ny, problems, positive=True, integer=True):
        if ny % 2 or ny < 8:
            problems.append(f"grid.Ny: must be an even integer >= 8, got {ny}")
    if "X_schedule" in raw:
        if "X" in raw or "Nx" in raw:
            problems.append("grid: give either X and Nx, or X_schedule and dx")
        sched = raw["X_schedule"]
        dx = raw.get("dx")
        if dx is None:
            problems.append("grid.dx: required with X_schedule")
        else:
            _number("grid", "dx", dx, problems, positive=True)
        if not isinstance(sched, list) or not sched:
            problems.append("grid.X_schedule: expected a non-empty list")
            return None, None, None, int(ny)
        if not all(_number("grid", "X_schedule", v, problems, positive=True) for v in sched):
            return None, None, None, int(ny)
        if any(b <= a for a, b in zip(sched, sched[1:])):
            problems.append("grid.X_schedule: must be strictly increasing")
        if isinstance(dx, (int, float)) and dx > 0:
            for X in sched:
                nx = 2 * X / dx
                if abs(nx - round(nx)) > 1e-6:
                    problems.append(f"grid.X_schedule: X={X} is not a multiple of dx/2")
        return None, tuple(float(v) for v in sched), dx, int(ny)
    for key in ("X", "Nx"):
        if key not in raw:
            problems.append(f"grid.{key}: required")
    if problems:
        return None, None, None, int(ny) if isinstance(ny, int) else 8
    try:
        return CylinderGrid(raw["X"], raw["Nx"], ny), None, None, int(ny)
    except ValidationError as exc:
        problems.extend(f"grid: {v}" for v in exc.violations)
        return None, None, None, 8


def _parse_preset(raw, problems):
    if raw is None:
        return ConformalPreset("fubini-study")
    if not isinstance(raw, dict):
        problems.append("conformal: expected an object")
        return ConformalPreset("fubini-study")
    _unknown("conformal", raw, {"preset", "params"}, problems)
    kind = raw.get("preset", "fubini-study")
    if kind not in PRESET_KINDS:
        problems.append(f"conformal.preset: must be one of {list(PRESET_KINDS)}, got {kind!r}")
        return ConformalPreset("fubini-study")
    try:
        return ConformalPreset(kind, dict(raw.get("params", {})))
    except (ValidationError, TypeError, ValueError) as exc:
        problems.append(f"conformal.params: {exc}")
        return ConformalPreset("fubini-study")


def _parse_flow(raw, problems):
    raw = raw or {}
    if not isinstance(raw, dict):
        problems.append("flow: expected an object")
        return dict(_FLOW_DEFAULTS)
    _unknown("flow", raw, _FLOW_DEFAULTS, problems)
    out = dict(_FLOW_DEFAULTS)
    out.update({k: v for k, v in raw.items() if k in _FLOW_DEFAULTS})
    for key in ("tol", "t_max", "dt_max"):
        _number("flow", key, out[key], problems, positive=True)
    _number("flow", "max_steps", out["max_steps"], problems, positive=True, integer=True)
    if _number("flow", "grow", out["grow"], problems, positive=True) and out["grow"] < 1:
        problems.append("flow.grow: must be >= 1")
    _number("flow", "perturb", out["perturb"], problems)
    if out["dt0"] is not None:
        _number("flow", "dt0", out["dt0"], problems, positive=True)
    if out["scheme"] not in SCHEMES:
        problems.append(f"flow.scheme: must be one of {list(SCHEMES)}, got {out['scheme']!r}")
    if out["frame"] not in FRAMES:
        problems.append(f"flow.frame: must be one of {list(FRAMES)}, got {out['frame']!r}")
    for key in ("monotone", "det_renormalize", "fixed_dt"):
        if not isinstance(out[key], bool):
            problems.append(f"flow.{key}: expected true or false")
    sig = out["sigmas"]
    if (not isinstance(sig, list) or not sig
            or not all(isinstance(s, (int, float)) and 0 < s <= 1 for s in sig)):
        problems.append("flow.sigmas: expected a non-empty list of numbers in (0, 1]")
    return out


def _parse_analysis(raw, problems):
    raw = raw or {}
    if not isinstance(raw, dict):
        problems.append("analysis: expected an object")
        return dict(_ANALYSIS_DEFAULTS)
    _unknown("analysis", raw, _ANALYSIS_DEFAULTS, problems)
    out = dict(_ANALYSIS_DEFAULTS)
    out.update({k: v for k, v in raw.items() if k in _ANALYSIS_DEFAULTS})
    w = out["window"]
    if w is not None and not (isinstance(w, list) and len(w) == 2
                              and all(isinstance(v, (int, float)) for v in w) and 0 < w[0] < w[1]):
        problems.append("analysis.window: expected [t_lo, t_hi] with 0 < t_lo < t_hi")
    if out["source"] not in ("model", "flow"):
        problems.append(f"analysis.source: must be 'model' or 'flow', got {out['source']!r}")
    _number("analysis", "min_nodes", out["min_nodes"], problems, positive=True, integer=True)
    sub = out["subbundle"]
    if sub is not None and not (isinstance(sub, dict) and set(sub) <= {"zero", "infinity"}):
        problems.append("analysis.subbundle: expected {\"zero\": [...], \"infinity\": [...]}")
    return out


def _parse_outputs(raw, problems):
    raw = raw or {}
    if not isinstance(raw, dict):
        problems.append("outputs: expected an object")
        return dict(_OUTPUT_DEFAULTS)
    _unknown("outputs", raw, _OUTPUT_DEFAULTS, problems)
    out = dict(_OUTPUT_DEFAULTS)
    out.update({k: v for k, v in raw.items() if k in _OUTPUT_DEFAULTS})
    if out["directory"] is not None and not isinstance(out["directory"], str):
        problems.append("outputs.directory: expected a string")
    reps = out["reports"]
    if not isinstance(reps, list) or any(r not in REPORTS for r in reps):
        problems.append(f"outputs.reports: expected a list drawn from {list(REPORTS)}")
    return out


def config_from_dict(data) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ValidationError("config: top level must be a JSON object")
    problems: list[str] = []
    _unknown("config", data, _SECTIONS, problems)

    bundle = None
    if "bundle" not in data:
        problems.append("bundle: required")
    else:
        try:
            bundle = bundle_from_dict(data["bundle"])
        except ValidationError as exc:
            problems.extend(f"bundle: {v}" for v in exc.violations)
    if "grid" not in data:
        problems.append("grid: required")
        grid, sched, dx, ny = None, None, None, 8
    else:
        grid, sched, dx, ny = _parse_grid(data["grid"], problems)

    preset = _parse_preset(data.get("conformal"), problems)
    flow = _parse_flow(data.get("flow"), problems)
    analysis = _parse_analysis(data.get("analysis"), problems)
    outputs = _parse_outputs(data.get("outputs"), problems)

    oracle_raw = data.get("oracle") or {}
    which = "rank1"
    if not isinstance(oracle_raw, dict):
        problems.append("oracle: expected an object")
    else:
        _unknown("oracle", oracle_raw, {"which"}, problems)
        which = oracle_raw.get("which", "rank1")
        if which not in ORACLES:
            problems.append(f"oracle.which: must be one of {list(ORACLES)}, got {which!r}")

    if problems:
        raise ValidationError(f"{len(problems)} problem(s) in config: " + "; ".join(problems),
                              problems)
    return ScenarioConfig(bundle, grid, sched, dx, ny, preset, flow, analysis, which, outputs,
                          raw=data)


def parse_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data)
