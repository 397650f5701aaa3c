import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parapoisson.analysis import (chern_weil_degree, degree_via_curvature, dual_flatness_check,
                                  fourier_gap, gradient_decay_profile, hym_lift_check,
                                  induced_curvature_trace, orthogonal_projection,
                                  random_flat_connection, random_smooth_metric,
                                  second_fundamental_form, tameness_report, uniqueness_compare,
                                  write_profile_csv)
from parapoisson.bundle import enumerate_flat_subbundles, parabolic_degree, simple_bundle
from parapoisson.errors import InsufficientRange, ValidationError, ZeroInput
from parapoisson.flow import curvature_K
from parapoisson.geometry import build_grid
from parapoisson.model import build_model_metric, prepare_model


def _model(blocks, w0, winf=None, grid=(8, 400, 32)):
    b = simple_bundle(blocks, w0, winf)
    s = prepare_model(b, build_grid(*grid))
    return b, s, build_model_metric(b, s.grid, frame="unitary", setup=s)


@pytest.mark.parametrize("blocks,w0,winf", [
    ([(0.2j, 2)], [-0.25], None),
    ([(0.2j, 2)], [0.0], None),
    ([(0.3, 1)], [0.25], [0.25]),
    ([(0.2j, 2)], [0.25], None),
    ([(0.5, 1), (0.1, 1)], [0.5, 0.5], [0.5, 0.5]),
])
def test_degree_from_curvature(blocks, w0, winf):
    b, s, H = _model(blocks, w0, winf)
    est = degree_via_curvature(H, s)
    assert est.value == pytest.approx(parabolic_degree(b), abs=0.02)
    assert est.to_dict()["X"] == 8
    assert degree_via_curvature(3 * H.values, s).value == pytest.approx(est.value, abs=1e-10)


def test_chern_weil_whole_bundle_is_degree():
    _, s, H = _model([(0.2j, 2)], [0.25])
    whole = s.bundle.subbundle_from_zero([2])
    assert chern_weil_degree(H, s, whole).value == pytest.approx(
        degree_via_curvature(H, s).value, abs=1e-12)


@pytest.mark.parametrize("blocks,w0,winf,prefix,expect", [
    ([(0.2j, 2)], [0.0], None, [1], 0.0),
    ([(0.5, 1), (0.1, 1)], [0.25, -0.25], [0.25, -0.25], [1, 0], 0.5),
    ([(0.5, 1), (0.1, 1)], [0.25, -0.25], [0.25, -0.25], [0, 1], -0.5),
])
def test_chern_weil_examples(blocks, w0, winf, prefix, expect):
    b, s, H = _model(blocks, w0, winf)
    sub = b.subbundle_from_zero(prefix)
    assert parabolic_degree(b, sub) == pytest.approx(expect)
    assert chern_weil_degree(H, s, sub).value == pytest.approx(expect, abs=0.02)


def test_second_fundamental_form_examples():
    b, s, H = _model([(0.5, 1), (0.1, 1)], [0.25, -0.25], None, (5, 100, 16))
    for sub in enumerate_flat_subbundles(b):
        assert np.max(second_fundamental_form(H, s, sub).norm_sq()) < 1e-20
    jb, js, jH = _model([(0.0, 2)], [0.0], None, (8, 400, 16))
    whole = jb.subbundle_from_zero([2])
    assert np.max(second_fundamental_form(jH, js, whole).norm_sq()) < 1e-20
    beta = second_fundamental_form(jH, js, jb.subbundle_from_zero([1]))
    g = js.grid
    far = g.x >= 4
    # |beta| ~ 1/t in the cylinder metric
    nb = np.sqrt(beta.norm_sq(jH.values))[far, 0]
    assert np.allclose(nb * g.x[far], 1.0, rtol=0.02)


def test_induced_curvature_identity():
    b, s, H = _model([(0.3, 2), (0.1, 1)], [0.2, -0.1], [0.0, 0.1], (5, 200, 32))
    Hv = H.values
    K = curvature_K(Hv, s).values
    for sub in enumerate_flat_subbundles(b):
        pi = orthogonal_projection(Hv, b.projection_diagonal(sub))
        lhs = induced_curvature_trace(Hv, s, sub)
        rhs = (np.trace(pi @ K @ pi, axis1=-2, axis2=-1).real
               - 0.25 * second_fundamental_form(Hv, s, sub).norm_sq(Hv) / s.E.values)[1:-1]
        rows = np.abs(s.grid.x[1:-1]) >= 3
        assert np.max(np.abs(lhs - rhs)[rows]) < 0.05 * max(1.0, np.max(np.abs(lhs[rows])))


def test_tameness_model_passes():
    b, s, H = _model([(0.2, 2), (0.4, 1)], [0.25, -0.3], [0.1, 0.2], (10, 500, 16))
    rep = tameness_report(H, s)
    assert rep.passed, rep.to_dict()
    d = rep.to_dict()
    assert d["schema"] == "parapoisson.tameness/1"
    assert len(d["blocks"]) == 4
    assert d["window"] == [5.0, 9.0]


def test_tameness_flags_rescaled_metric():
    b, s, H = _model([(0.2, 1)], [0.0], None, (10, 500, 16))
    g = s.grid
    scaled = H.values * np.exp(-0.3 * np.abs(g.x))[:, None, None, None]
    rep = tameness_report(scaled, s)
    assert not rep.passed
    assert all(abs(bl.w_hat_C[0] - 0.15) < 0.01 for bl in rep.blocks)


def test_tameness_window_too_small():
    _, s, H = _model([(0.2, 1)], [0.0], None, (8, 80, 16))
    with pytest.raises(InsufficientRange):
        tameness_report(H, s)


def test_gradient_decay_profile(tmp_path):
    g = build_grid(8, 400, 8)
    prof = gradient_decay_profile(np.broadcast_to(np.eye(2), g.shape + (2, 2)), g)
    assert all(r["integral"] == 0 for r in prof["table"])
    # |dh/dx| = 1/x for |x| > 1 gives integral 2 * 2 pi / X'
    h = np.log(np.maximum(np.abs(g.x), 1.0))[:, None] * np.ones(g.shape)
    prof = gradient_decay_profile(h, g, cutoffs=[2.0, 3.0, 4.0, 5.0])
    for r in prof["table"]:
        exact = 4 * math.pi * (1 / r["X_prime"] - 1 / g.X)
        assert r["integral"] == pytest.approx(exact, rel=0.02)
    write_profile_csv(prof, tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().startswith("X_prime,integral")


def test_fourier_gap_examples():
    y = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    r = fourier_gap(np.ones(16), 0.5)
    assert r["ratio"] == pytest.approx(0.25) and r["gap"] == pytest.approx(0.25) and r["holds"]
    assert fourier_gap(np.ones(16), 0.0)["ratio"] == 0
    r = fourier_gap(np.exp(1j * y), 0.25)
    assert r["ratio"] == pytest.approx(1.5625) and r["gap"] == pytest.approx(0.0625)
    with pytest.raises(ZeroInput):
        fourier_gap(np.zeros(16), 0.3)
    with pytest.raises(ValidationError):
        fourier_gap(np.ones(4), 0.3)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3))
def test_fourier_gap_property(seed, lam):
    rng = np.random.default_rng(seed)
    g = np.fft.ifft(np.where(np.abs(np.fft.fftfreq(32, 1 / 32)) <= 8,
                             rng.standard_normal(32) + 1j * rng.standard_normal(32), 0))
    if np.allclose(g, 0):
        return
    assert fourier_gap(g, lam)["holds"]


def test_identity_checks_trivial():
    def H(X, Y):
        return np.broadcast_to(np.eye(1), np.shape(X) + (1, 1))

    def G(X, Y):
        z = np.zeros(np.shape(X) + (1, 1))
        return z, z
    assert hym_lift_check(H, G) == 0
    assert dual_flatness_check(H, G) == 0


@pytest.mark.parametrize("seed", range(4))
def test_identity_checks_random_converge(seed):
    rng = np.random.default_rng(seed)
    n = 2 + seed % 2
    H = random_smooth_metric(rng, n)
    G = random_flat_connection(rng, n)
    for check in (hym_lift_check, dual_flatness_check):
        coarse, fine = check(H, G, h=0.04), check(H, G, h=0.02)
        assert fine < 1e-3
        assert 3.0 < coarse / fine < 5.0


def test_dual_flatness_negative_control():
    rng = np.random.default_rng(7)
    H = random_smooth_metric(rng, 2)
    G = random_flat_connection(rng, 2, curvature=0.5)
    assert dual_flatness_check(H, G, h=0.02) > 0.05


def test_random_data_is_reproducible():
    a = random_smooth_metric(np.random.default_rng(3), 2)(0.1, 0.2)
    b = random_smooth_metric(np.random.default_rng(3), 2)(0.1, 0.2)
    assert np.array_equal(a, b)
    assert np.min(np.linalg.eigvalsh(a)) > 0


def test_uniqueness_compare():
    _, s, H = _model([(0.2j, 2)], [0.25], None, (5, 100, 16))
    lam, dev = uniqueness_compare(H.values, 3 * H.values)
    assert lam == pytest.approx(3) and dev < 1e-12
    sigma = np.array([[1.0, 1.0], [0.0, 1.0]])
    lam, dev = uniqueness_compare(H.values, sigma.T @ H.values @ sigma)
    assert dev > 0.1
    with pytest.raises(ValidationError):
        uniqueness_compare(H.values, H.values[:3])


def test_tameness_invariant_under_flat_conjugation():
    from parapoisson.fields import MetricField
    from parapoisson.model import gauge_transform
    b, s, H = _model([(0.0, 2)], [0.2], None, (10, 500, 16))
    Ht = gauge_transform(H, "unitary", "temporal", s).values
    sigma = np.array([[1.0, 1.0], [0.0, 1.0]])
    conj = MetricField(s.grid, "temporal", sigma.T @ Ht @ sigma)
    rep = tameness_report(conj, s, frame="temporal")
    base = tameness_report(H, s)
    assert rep.passed
    for a, c in zip(rep.blocks, base.blocks):
        assert a.w_hat_B == pytest.approx(c.w_hat_B, abs=2e-3)
