import numpy as np
import pytest

from parapoisson.analysis import psi_field, self_adjointness_defect
from parapoisson.bundle import simple_bundle
from parapoisson.curvature import curvature_interior, psi_nodes
from parapoisson.errors import SingularH
from parapoisson.fields import MetricField
from parapoisson.flow import curvature_K
from parapoisson.geometry import ConformalPreset, build_grid
from parapoisson.model import (build_model_metric, connection, gauge_transform, model_residual,
                               prepare_model)

FLAT = ConformalPreset("custom-table", {"value": 1.0})
SIGMA = np.array([[1.0, 1.0], [0.0, 1.0]])


def _jordan_setup(X=8, dx=0.04):
    b = simple_bundle([(0.0, 2)], [0.0])
    ny = 2 * int(np.ceil(np.pi / dx))
    return prepare_model(b, build_grid(X, int(round(2 * X / dx)), ny), FLAT)


def test_identity_h_gives_model_curvature():
    s = _jordan_setup(6, 0.08)
    H = build_model_metric(s.bundle, s.grid, frame="unitary", setup=s).values
    K = curvature_K(H, s).values
    K0 = curvature_interior(None, connection(s, "unitary"), s.E.values, identity=True)
    assert np.max(np.abs(K[1:-1] - K0)) < 1e-10


def test_sigma_conjugate_is_a_local_solution():
    s = _jordan_setup()
    g = s.grid
    Ht = build_model_metric(s.bundle, g, frame="temporal", setup=s).values
    Hs = SIGMA.conj().T @ Ht @ SIGMA
    K = curvature_K(Hs, s, frame="temporal").values
    far = np.abs(g.x) >= 3
    assert np.max(np.abs(K[far])) < 1e-4
    hu = gauge_transform(MetricField(g, "temporal", Hs), "temporal", "unitary", s).values
    t = g.x[g.x >= 3][:, None]
    expect = np.stack([np.stack([np.ones_like(t), 1 / t], -1),
                       np.stack([1 / t, 1 + 1 / t ** 2], -1)], -2)
    assert np.max(np.abs(hu[g.x >= 3] - expect)) < 1e-10


def test_rank1_scalar_laplacian_oracle():
    b = simple_bundle([(0.2, 1)], [0.0])
    g = build_grid(5, 200, 64)
    s = prepare_model(b, g, FLAT)
    xx, yy = g.mesh()
    f = 0.3 * np.exp(-xx ** 2) * np.cos(yy)
    lap = (4 * xx ** 2 - 2) * np.exp(-xx ** 2) * np.cos(yy) * 0.3 - f
    K = curvature_K(np.exp(2 * f)[..., None, None], s).values[..., 0, 0]
    err = np.max(np.abs(K[1:-1] - (-0.5 * lap[1:-1] + s.c)))
    assert err < 5 * max(g.dx, g.dy) ** 2


def test_trace_identity_is_exact():
    b = simple_bundle([(0.3, 2), (0.1, 1)], [0.2, -0.1], [0.0, 0.1])
    g = build_grid(5, 60, 16)
    s = prepare_model(b, g)
    rng = np.random.default_rng(1)
    A = rng.standard_normal(g.shape + (3, 3)) * 0.1
    H = build_model_metric(b, g, frame="unitary", setup=s).values + A @ A.transpose(0, 1, 3, 2)
    K = curvature_K(H, s).values[1:-1]
    phi = np.log(np.linalg.det(H).real)
    lap = ((phi[2:] - 2 * phi[1:-1] + phi[:-2]) / g.dx ** 2
           + (np.roll(phi, -1, 1) - 2 * phi + np.roll(phi, 1, 1))[1:-1] / g.dy ** 2)
    K0 = curvature_interior(None, connection(s, "unitary"), s.E.values, identity=True)
    tr = np.trace(K - K0, axis1=-2, axis2=-1)
    assert np.max(np.abs(tr - (-lap / (4 * s.E.values[1:-1])))) < 1e-8 * np.max(np.abs(tr))


def test_constant_scaling_leaves_curvature():
    s = _jordan_setup(5, 0.1)
    H = build_model_metric(s.bundle, s.grid, frame="unitary", setup=s).values
    assert np.max(np.abs(curvature_K(3 * H, s).values - curvature_K(H, s).values)) < 1e-10


def test_psi_self_adjoint():
    b = simple_bundle([(0.3, 2), (0.1, 1)], [0.2, -0.1])
    g = build_grid(5, 60, 16)
    s = prepare_model(b, g)
    rng = np.random.default_rng(2)
    A = (rng.standard_normal(g.shape + (3, 3)) + 1j * rng.standard_normal(g.shape + (3, 3))) * 0.2
    H = np.eye(3) + A @ np.conj(np.swapaxes(A, -1, -2))
    psi = psi_field(H, s)
    assert self_adjointness_defect(psi, H) < 1e-10


def test_psi_rank1_radial_derivative():
    # H = r^{-2w} e^{...} in a flat frame: Psi_x = 1/2 d/dx log H
    b = simple_bundle([(0.0, 1)], [0.0])
    g = build_grid(5, 100, 8)
    s = prepare_model(b, g, FLAT)
    w = 0.3
    H = np.exp(2 * w * g.x)[:, None, None, None] * np.ones(g.shape + (1, 1))
    px, py = psi_nodes(H, connection(s, "temporal"))
    assert np.allclose(px[..., 0, 0].real, w, atol=1e-12)
    assert np.allclose(py, 0, atol=1e-12)


def test_positivity_floor():
    s = _jordan_setup(5, 0.1)
    H = np.zeros(s.grid.shape + (2, 2))
    H[..., 0, 0] = 1
    with pytest.raises(SingularH):
        curvature_K(H, s)


def test_model_residual_flat_window_small():
    s = _jordan_setup(8, 0.04)
    r = model_residual(s).values
    assert np.max(r[np.abs(s.grid.x) >= 3]) < 1e-4
