"""Poisson metrics on flat parabolic bundles over the two-punctured sphere."""

from .bundle import (FlatBundleSpec, FlatSubbundleSpec, JordanBlock, load_bundle,
                     parabolic_degree, simple_bundle, slope, stability_classify)
from .config import parse_config
from .errors import PoissonError
from .fields import ConnectionField, EndomorphismField, MetricField
from .flow import extract_destabilizer, rho_continuation, run_flow, solve_bvp
from .geometry import ConformalPreset, CylinderGrid, build_grid
from .model import build_model_metric, gauge_transform, model_residual, prepare_model

__version__ = "0.1.0"

__all__ = [
    "ConformalPreset", "ConnectionField", "CylinderGrid", "EndomorphismField",
    "FlatBundleSpec", "FlatSubbundleSpec", "JordanBlock", "MetricField", "PoissonError",
    "build_grid", "build_model_metric", "extract_destabilizer", "gauge_transform",
    "load_bundle", "model_residual", "parabolic_degree", "parse_config", "prepare_model",
    "rho_continuation", "run_flow", "simple_bundle", "slope", "solve_bvp",
    "stability_classify",
]
