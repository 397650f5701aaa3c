import numpy as np
import pytest

from parapoisson.bundle import simple_bundle
from parapoisson.errors import ValidationError
from parapoisson.geometry import ConformalPreset, build_grid
from parapoisson.model import prepare_model
from parapoisson.oracles import (jordan_closed_form, jordan_oracle_h, jordan_shooting,
                                 manufactured_poisson, radial_ode_oracle, rank1_oracle)


def test_jordan_shooting_matches_closed_form():
    x = np.linspace(-6, 6, 121)
    assert np.max(np.abs(jordan_shooting(6.0, x) - jordan_closed_form(6.0, x))) < 1e-9


def test_jordan_closed_form_solves_ode():
    X = 5.0
    x = np.linspace(-X, X, 2001)
    v = jordan_closed_form(X, x)
    dx = x[1] - x[0]
    vxx = (v[2:] - 2 * v[1:-1] + v[:-2]) / dx ** 2
    assert np.max(np.abs(vxx - 2 * np.exp(v[1:-1]))) < 1e-4
    assert v[0] == pytest.approx(-2 * np.log(X))


@pytest.mark.parametrize("d", [2, 3])
def test_radial_ode_reproduces_model(d):
    _, num, exact = radial_ode_oracle(d)
    assert np.max(np.abs(num - exact) / exact) < 1e-6


def test_manufactured_second_order():
    rows = manufactured_poisson()
    assert [r["Nx"] for r in rows] == [40, 80, 160]
    assert all(3.5 < r["ratio"] < 4.5 for r in rows[1:])


def test_rank1_oracle_boundary_and_shape():
    b = simple_bundle([(0.3, 1)], [0.25])
    s = prepare_model(b, build_grid(5, 100, 16))
    h = rank1_oracle(s)
    assert h.shape == s.grid.shape
    assert np.allclose(h[[0, -1]], 1.0)
    assert np.all(h > 0)


def test_oracle_preconditions():
    s = prepare_model(simple_bundle([(0.0, 2)], [0.0]), build_grid(5, 100, 16))
    with pytest.raises(ValidationError):
        rank1_oracle(s)
    s1 = prepare_model(simple_bundle([(0.3, 1)], [0.0]), build_grid(5, 100, 16))
    with pytest.raises(ValidationError):
        jordan_oracle_h(s1)


def test_jordan_oracle_is_unitary_frame_hermitian():
    s = prepare_model(simple_bundle([(0.2j, 2)], [0.0]), build_grid(5, 100, 16),
                      ConformalPreset("fubini-study"))
    h = jordan_oracle_h(s)
    assert np.allclose(h, np.conj(np.swapaxes(h, -1, -2)))
    assert np.allclose(np.linalg.det(h), 1.0)
