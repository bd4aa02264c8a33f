from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wanderlab.maps import PlanarMap
from wanderlab.perturb import (
    BumpSpec,
    CompositePerturbation,
    PerturbationError,
    budget_threshold,
    bump_cr_norm,
    bump_eval,
    bump_norm_bound,
    c_t_budget,
    cauchy_tail_check,
    delta_shift,
    displacement_cr_norm,
    injective_on_grid,
    perturbation_sequence,
    psi_eval,
    rotation_term,
    smooth_step,
)


def test_bump_values():
    s = BumpSpec(0.3, 0.0, 1.0)
    assert bump_eval(s, 0.5) == 1.0
    assert bump_eval(s, s.a - 2 * s.rho * (s.b - s.a)) == 0.0


@given(st.floats(0.0, 0.6))
def test_bump_symmetry(t):
    s = BumpSpec(0.3, 0.0, 1.0)
    assert bump_eval(s, s.a + t) == pytest.approx(bump_eval(s, s.b - t), abs=1e-15)


@given(st.floats(-5, 5))
def test_smooth_step_range(x):
    assert 0.0 <= smooth_step(x) <= 1.0


def test_bump_norms():
    for rho in (0.1, 0.5):
        assert bump_cr_norm(BumpSpec(rho, 0, 1), 0) == 1.0
        for r in (1, 2, 3):
            unit, wide = bump_cr_norm(BumpSpec(rho, 0, 1), r), bump_cr_norm(BumpSpec(rho, 0, 2), r)
            assert unit == pytest.approx(wide * 2 ** r, rel=0.01)
            assert unit <= bump_norm_bound(BumpSpec(rho, 0, 1), r) * (1 + 1e-9)


def _translation(dx: float) -> PlanarMap:
    return PlanarMap(lambda p: (p[0] + dx, p[1]), lambda p: np.eye(2), lambda q: (q[0] - dx, q[1]))


def test_delta_shift_inner_and_outer():
    f = _translation(5.0)
    center, r0, delta = (5.0, 0.0), 1.0, 0.05
    g = delta_shift(f, delta, center, r0)
    p_in = (0.1, 0.2)  # f(p) within r0/2 of the center
    assert g.eval(p_in) == pytest.approx((f.eval(p_in)[0] + delta, f.eval(p_in)[1]), abs=1e-15)
    p_out = (1.2, 0.0)
    assert g.eval(p_out) == f.eval(p_out)
    back = g.inverse(g.eval(p_in))
    assert back == pytest.approx(p_in, abs=1e-12)


def test_delta_shift_sup_distance_linear():
    f = _translation(5.0)
    pts = [(5.0 + r * math.cos(a) - 5.0, r * math.sin(a)) for r in np.linspace(0, 1, 11)
           for a in np.linspace(0, 2 * math.pi, 24)]
    sups = []
    for d in (0.08, 0.04, 0.02, 0.01):
        g = delta_shift(f, d, (5.0, 0.0), 1.0)
        sups.append(max(math.dist(g.eval(p), f.eval(p)) for p in pts))
    ratios = [a / b for a, b in zip(sups, sups[1:])]
    assert ratios == pytest.approx([2.0] * 3, rel=1e-9)


def test_delta_shift_rejects_overlap():
    with pytest.raises(PerturbationError):
        delta_shift(_translation(0.5), 0.01, (0.0, 0.0), 1.0)
    with pytest.raises(PerturbationError):
        delta_shift(_translation(5.0), 0.2, (5.0, 0.0), 1.0)


def test_budget_threshold():
    thr = budget_threshold(3, 3, 2, 2.1)
    assert thr == pytest.approx(6 * math.log(5) / math.log(2.1), rel=1e-14)
    assert thr == pytest.approx(13.0154, abs=1e-4)
    with pytest.raises(PerturbationError):
        c_t_budget(13, 3, 3, 2, 1.0, 1.0, 0)
    assert c_t_budget(14, 3, 3, 2, 1.0, 1.0, 0) > 0


def test_c_t_decreasing():
    vals = [c_t_budget(T, 3, 3, 2, 1.0, 1.0, 0) for T in np.linspace(13.5, 40, 30)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_weighted_sum_under_budget():
    seq = perturbation_sequence(14, levels=8)
    assert float(np.sum(seq.weighted_sizes())) < seq.budget()


@pytest.mark.parametrize("T", [20, 30])
def test_weighted_sum_matches_budget(T):
    # the extremal sequence sums the same geometric series as C_T; for large T the
    # omitted tail is below double resolution
    seq = perturbation_sequence(T, levels=8)
    assert float(np.sum(seq.weighted_sizes())) <= seq.budget() * (1 + 1e-12)


def test_psi_support_and_plateau():
    seq = perturbation_sequence(20, levels=4)
    cp = seq.composite
    assert psi_eval(cp, (5.0, 5.0)) == (5.0, 5.0)
    for term, uk in zip(seq.terms, seq.u):
        xh = term.xi.x_hat
        got = psi_eval(cp, xh)
        assert got == pytest.approx((xh[0] + uk[0], xh[1] + uk[1]), rel=1e-12, abs=1e-300)


def test_truncations_and_injectivity():
    seq = perturbation_sequence(20, levels=4)
    cp = seq.composite
    w = seq.widths[0]
    assert injective_on_grid(cp, (2.5 * w, 4.5 * w, -0.7, 0.7))
    assert cp.truncated(0).displacement(3.5 * w, 0.0) == (0.0, 0.0)


@pytest.mark.parametrize("T", [16, 20])
def test_cauchy_tail(T):
    seq = perturbation_sequence(T, levels=6)
    for a, b in ((0, 6), (2, 6), (4, 6)):
        measured, bound = cauchy_tail_check(seq, a, b)
        assert measured <= bound


def test_rotation_term_translation():
    xi = rotation_term((0.1, -0.2), (1.0, 1.0), 0.0)
    assert xi((3.0, 4.0)) == pytest.approx((3.1, 3.8))


def test_rotation_term_rejects_large_angle():
    with pytest.raises(PerturbationError):
        rotation_term((1e-3, 0.0), (0.0, 0.0), 1.0, C=1.0)


@settings(max_examples=30)
@given(st.floats(-1, 1), st.floats(-1e-2, 1e-2), st.floats(-1e-2, 1e-2))
def test_rotation_is_isometry(omega, ux, uy):
    xi = rotation_term((ux, uy), (0.3, -0.2), omega)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (100, 4))
    for x0, y0, x1, y1 in pts:
        d0 = math.dist((x0, y0), (x1, y1))
        d1 = math.dist(xi((x0, y0)), xi((x1, y1)))
        assert abs(d0 - d1) <= 1e-12
    # sup displacement over the square S = [-1, 1]^2, diameter 2 sqrt 2
    diam = 2 * math.sqrt(2)
    sup = max(math.dist(xi((x, y)), (x, y)) for x, y, _, _ in pts)
    assert sup <= math.hypot(ux, uy) + 2 * abs(omega) * diam + 1e-15


def test_displacement_norm_decreases_in_T():
    norms = [displacement_cr_norm(perturbation_sequence(T).composite, 3) for T in (14, 16, 20, 30)]
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_empty_composite():
    assert psi_eval(CompositePerturbation(()), (0.3, 0.4)) == (0.3, 0.4)
