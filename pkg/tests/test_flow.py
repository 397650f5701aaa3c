import json

import numpy as np
import pytest

from parapoisson.bundle import simple_bundle
from parapoisson.errors import NoCandidate, NoConvergence, ValidationError
from parapoisson.fields import MetricField
from parapoisson.flow import (bump_perturbation, continuation_grids, extend_by_identity,
                              extract_destabilizer, flow_step, initial_state, plateau_verdict,
                              rho_continuation, run_flow, write_continuation_csv,
                              write_monitor_csv, write_report_json)
from parapoisson.geometry import build_grid
from parapoisson.model import connection, gauge_transform, prepare_model
from parapoisson.oracles import jordan_oracle_h, rank1_oracle


def test_model_is_a_fixed_point(rank1):
    s = prepare_model(rank1, build_grid(5, 100, 16))
    conn = connection(s, "unitary")
    st = initial_state(s, conn=conn)
    for scheme in ("implicit", "explicit"):
        nxt = flow_step(st, s, conn, scheme, dt=1e-3)
        assert np.max(np.abs(nxt.H - st.H)) < 1e-12


def test_bump_perturbation_shape():
    g = build_grid(5, 50, 16)
    for n in (1, 2, 3):
        h = bump_perturbation(g, n, 0.5)
        assert np.allclose(h[[0, -1]], np.eye(n))
        assert np.allclose(h, np.conj(np.swapaxes(h, -1, -2)))
        if n > 1:
            assert np.allclose(np.linalg.det(h), 1.0)
    assert np.min(bump_perturbation(g, 1, 0.5)) > 0


def test_det_preserved_over_1000_steps(jordan):
    g = build_grid(4, 24, 8)
    rep = run_flow(jordan, g, tol=0.0, h_init=bump_perturbation(g, 2, 0.5), dt0=1e-2,
                   fixed_dt=True, max_steps=1000, raise_on_failure=False)
    assert rep.steps == 1000
    assert max(m["det_deviation"] for m in rep.monitors) < 1e-8


def test_rank1_matches_linear_oracle(rank1):
    g = build_grid(5, 100, 32)
    rep = run_flow(rank1, g, tol=1e-8, h_init=bump_perturbation(g, 1, 0.5))
    assert rep.converged
    assert np.max(np.abs(rep.h[..., 0, 0] - rank1_oracle(rep.setup))) < 1e-6


def test_polystable_stays_block_diagonal(polystable):
    g = build_grid(5, 100, 32)
    rep = run_flow(polystable, g, tol=1e-8)
    assert np.max(np.abs(rep.h[..., 0, 1])) < 1e-8


def test_jordan_matches_shooting(jordan):
    g = build_grid(5, 100, 32)
    rep = run_flow(jordan, g, tol=1e-8, h_init=bump_perturbation(g, 2, 0.3))
    assert np.max(np.abs(rep.h - jordan_oracle_h(rep.setup))) < 1e-4


@pytest.mark.parametrize("scheme,steps", [("implicit", 400), ("explicit", 1500)])
def test_residual_decays_monotonically(polystable, scheme, steps):
    g = build_grid(4, 24, 8)
    rep = run_flow(polystable, g, tol=1e-7, scheme=scheme, max_steps=steps,
                   h_init=bump_perturbation(g, 2, 0.5), raise_on_failure=False)
    r = [m["sup_residual"] for m in rep.monitors]
    assert all(b <= a * (1 + 1e-10) for a, b in zip(r, r[1:]))
    assert rep.decay_rate > 0


def test_no_convergence_carries_report(rank1):
    g = build_grid(5, 100, 16)
    with pytest.raises(NoConvergence) as exc:
        run_flow(rank1, g, tol=1e-12, h_init=bump_perturbation(g, 1, 0.5), max_steps=2)
    assert exc.value.report.steps == 2
    assert exc.value.exit_code == 3


def test_bad_initial_shape(rank1):
    with pytest.raises(ValidationError):
        run_flow(rank1, build_grid(5, 100, 16), h_init=np.ones((3, 3, 1, 1)))


def test_report_writers(tmp_path, rank1):
    g = build_grid(5, 100, 16)
    rep = run_flow(rank1, g, tol=1e-6, h_init=bump_perturbation(g, 1, 0.2))
    write_monitor_csv(rep, tmp_path / "m.csv")
    write_report_json(rep, tmp_path / "r.json")
    rows = (tmp_path / "m.csv").read_text().splitlines()
    assert rows[0].startswith("t,dt,sup_residual")
    assert len(rows) == len(rep.monitors) + 1
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["schema"] == "parapoisson.flow-report/1" and data["converged"]


def test_extend_by_identity_interpolates():
    old = build_grid(4, 100, 8)
    new = build_grid(5, 125, 8)
    h = np.broadcast_to((2 + old.x)[:, None, None, None], old.shape + (1, 1)).astype(complex)
    out = extend_by_identity(h, old, new)
    inside = np.abs(new.x) <= 4
    assert np.allclose(out[inside, 0, 0, 0], 2 + new.x[inside])
    assert np.all(out[~inside] == 1)
    with pytest.raises(ValidationError):
        extend_by_identity(h, old, build_grid(5, 125, 16))


def test_continuation_grid_checks():
    gs = continuation_grids([4, 5], 0.08, 32)
    assert [g.Nx for g in gs] == [100, 125]
    with pytest.raises(ValidationError):
        continuation_grids([5, 4], 0.08, 32)
    with pytest.raises(ValidationError):
        continuation_grids([4.01], 0.08, 32)


def test_plateau_verdict():
    assert plateau_verdict([2.0, 2.001]) == "bounded"
    assert plateau_verdict([2.0, 2.5]) == "unbounded-trend"
    assert plateau_verdict([2.0]) == "bounded"


def test_rank1_continuation_is_bounded(tmp_path, rank1):
    rep = rho_continuation(rank1, [4, 5, 6], dx=0.1, Ny=16)
    assert rep.verdict == "bounded"
    assert len(rep.continuation) == 3
    write_continuation_csv(rep, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().startswith("X,rho,m")


def test_synthetic_destabilizer(polystable):
    s = prepare_model(polystable, build_grid(5, 100, 16))
    h = np.zeros(s.grid.shape + (2, 2), dtype=complex)
    h[..., 0, 0] = 1e-4
    h[..., 1, 1] = 1e4
    d = extract_destabilizer(h, s)
    assert d.rank == 1
    assert d.idempotency < 1e-12
    assert d.flatness < 1e-20
    assert d.rounding_defect < 1e-6
    assert tuple(d.subbundle.prefixes["zero"]) == (1, 0)
    assert d.mismatch < 1e-12


def test_rank1_has_no_candidate(rank1):
    s = prepare_model(rank1, build_grid(5, 100, 16))
    with pytest.raises(NoCandidate):
        extract_destabilizer(np.ones(s.grid.shape + (1, 1), dtype=complex), s)


@pytest.mark.parametrize("bundle", [
    simple_bundle([(0.2j, 2)], [0.25]),
    simple_bundle([(0.3, 2), (0.1, 1)], [0.2, -0.1], [0.0, 0.1]),
])
def test_frames_reach_the_same_steady_state(bundle):
    g = build_grid(5, 50, 8)
    h0 = bump_perturbation(g, bundle.rank, 0.3)
    uni = run_flow(bundle, g, tol=1e-8, frame="unitary", h_init=h0)
    scale = np.max(np.abs(uni.state.H))
    for frame in ("parabolic", "temporal"):
        rep = run_flow(bundle, g, tol=1e-8, frame=frame, h_init=h0, setup=uni.setup)
        H = gauge_transform(MetricField(g, frame, rep.state.H), frame, "unitary", uni.setup).values
        assert np.max(np.abs(H - uni.state.H)) < 1e-8 * scale
