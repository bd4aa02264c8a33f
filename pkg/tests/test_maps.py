from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wanderlab.maps import (
    EscapeError,
    conjugacy_defect,
    default_model,
    finite_difference_jacobian,
    henon,
    henon_eval,
    henon_like,
    henon_like_eval,
    iterate,
    model_eval,
    period_orbit_quadratic,
    quad_eval,
    quadratic,
)


def test_henon_values():
    assert henon_eval(2, 0.3, (0, 0)) == (1.0, 0.0)
    assert henon_eval(2, 0.3, (1, 0)) == pytest.approx((-1.0, 0.3), abs=1e-15)
    for x, y in [(0.3, -0.2), (1.1, 0.7)]:
        assert henon_eval(2, 0.0, (x, y)) == pytest.approx((1 - 2 * x * x + y, 0.0))


def test_henon_like_values():
    assert henon_like_eval(-2, 0, (2, 2)) == (2, 2)
    assert henon_like_eval(-2, 0, (-1, -1)) == (-1, -1)
    assert henon_like_eval(-2, 0.1, (2, 2)) == pytest.approx((2.0, 2.2))


def test_quadratic_values():
    assert quad_eval(-2, 2) == 2
    assert quad_eval(-2, -1) == -1
    assert quad_eval(-2, 0) == -2
    assert quad_eval(-2, quad_eval(-2, 0)) == 2


def test_conjugacy_defect_samples():
    assert conjugacy_defect(0.0) == 0.0
    assert conjugacy_defect(0.5) == pytest.approx(0.0, abs=1e-15)
    xs = np.random.default_rng(1).uniform(0, 1, 1000)
    assert max(conjugacy_defect(float(x)) for x in xs) <= 1e-12


def test_iterate_orbits():
    orb = iterate(henon_like(-2, 0).eval, (2, 2), 5)
    assert len(orb.points) == 6
    assert all(p == pytest.approx((2, 2)) for p in orb.points)
    assert iterate(henon(2, 0.3).eval, (0, 0), 1).points == ((0, 0), (1.0, 0.0))


def test_iterate_escape():
    orb = iterate(henon(2, 0.3).eval, (5.0, 5.0), 10)
    assert orb.escaped_at is not None
    with pytest.raises(EscapeError):
        iterate(henon(2, 0.3).eval, (5.0, 5.0), 10, raise_on_escape=True)


def test_period_three_orbit_closes():
    orbit = period_orbit_quadratic(-2, 3, 0.5)
    x = orbit[0]
    for _ in range(3):
        x = quad_eval(-2, x)
    assert abs(x - orbit[0]) < 1e-9
    # oracle: the period-3 points of x^2 - 2 are 2 cos(2 pi j / 9) for j = 1, 2, 4
    expected = sorted(2 * math.cos(2 * math.pi * j / 9) for j in (1, 2, 4))
    assert sorted(orbit) == pytest.approx(expected, abs=1e-12)


def test_model_linear_piece():
    m = default_model(0.2, 3.0)
    assert model_eval(m, (1, 0.1)) == pytest.approx((0.2, 0.3))
    assert model_eval(m, m.fold_center) == pytest.approx(m.q)


@given(st.floats(0.05, 1.95))
def test_model_keeps_stable_axis(x):
    m = default_model(0.2, 3.0)
    _, y = model_eval(m, (x, 0.0))
    assert y == 0.0


@settings(max_examples=50)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 1.0), st.floats(1.0, 2.0))
def test_henon_inverse_roundtrip(x, y, b, a):
    f = henon(a, b)
    assert f.inverse(f.eval((x, y))) == pytest.approx((x, y), abs=1e-9)


@settings(max_examples=50)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 0), st.floats(-0.3, 0.3))
def test_henon_like_jacobian_matches_fd(x, y, mu, nu):
    f = henon_like(mu, nu)
    assert np.allclose(f.jacobian((x, y)), finite_difference_jacobian(f.eval, (x, y)), atol=1e-5)


@given(st.floats(-2, 0.25), st.floats(-2, 2))
def test_quadratic_derivative(mu, x):
    F = quadratic(mu)
    assert F.derivative(x) == pytest.approx(2 * x)
