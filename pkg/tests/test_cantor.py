from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wanderlab.cantor import (
    affine_s_system,
    distortion_report,
    gap_lemma_check,
    middle_cantor,
    s_bridges,
    thickness,
    u_bridges_quadratic,
)
from wanderlab.cantor import _fallback
from wanderlab.cantor.backend import BACKEND
from wanderlab.cantor.core import distortion_constant, kappa_threshold, quadratic_u_system, u_ratio_bounds
from wanderlab.cantor.tent import tent_coordinate_thickness, tent_thickness, tent_thickness_lower_bound
from wanderlab.maps import period_orbit_quadratic


def brute_thickness(lo: np.ndarray, hi: np.ndarray) -> float:
    """Independent oracle: for every gap and each of its endpoints, the bridge is the
    largest cover interval that reaches the endpoint without containing a gap at least
    as long; computed by direct scanning over the sorted cover."""
    order = np.argsort(lo)
    lo, hi = lo[order], hi[order]
    gaps = lo[1:] - hi[:-1]
    best = math.inf
    n = len(gaps)
    for g in range(n):
        L = gaps[g]
        # left bridge: walk left over gaps shorter than L
        j = g
        while j > 0 and gaps[j - 1] < L:
            j -= 1
        left = hi[g] - lo[j]
        j = g
        while j < n - 1 and gaps[j + 1] < L:
            j += 1
        right = hi[j + 1] - lo[g + 1]
        best = min(best, left / L, right / L)
    return best


def test_affine_lengths():
    K = s_bridges(affine_s_system(1 / 3, 1 / 3), 6)
    for k in range(7):
        assert np.allclose(K.line(k)[2], 3.0 ** -k, rtol=1e-12)


def test_slimmed_widths_and_ratios():
    K = s_bridges(affine_s_system(0.3, 0.45), 6, slim=True)
    root = K.line(0)[2][0]
    assert K.line(1)[2].max() < 9 / 21 * root
    for g in range(K.depth):
        parent = np.repeat(K.line(g)[2], K.r)
        assert (parent / K.line(g + 1)[2]).min() >= 2.1


def test_quadratic_root_bridge():
    K = u_bridges_quadratic(-2, 3, 3)
    a, b = K.chart(0)
    delta = 1 / 7
    assert (float(a[0]), float(b[0])) == pytest.approx((2 * delta, 1 - delta), abs=1e-14)
    assert float(b[0] - a[0]) == pytest.approx(4 / 7)
    a1, b1 = K.chart(1)
    assert float(b[0] - a[0]) / float(b1[0] - a1[0]) == pytest.approx(2.0)
    # the 3-cycle through 2 cos(2 pi / 7) is the image of the tent cycle {2/7, 4/7, 6/7}
    orbit = period_orbit_quadratic(-2, 3, 1.25)
    tent_images = [2 * math.cos(math.pi * t) for t in (2 / 7, 4 / 7, 6 / 7)]
    assert sorted(orbit) == pytest.approx(sorted(tent_images), abs=1e-12)
    lo, hi, _ = K.line(0)
    assert (float(lo[0]), float(hi[0])) == pytest.approx((min(orbit), max(orbit)), abs=1e-12)


@pytest.mark.parametrize("gap, tau", [(1 / 3, 1.0), (1 / 5, 2.0)])
def test_middle_cantor_thickness(gap, tau):
    K = s_bridges(middle_cantor(gap), 10)
    lo, hi, _ = K.line(10)
    assert brute_thickness(lo, hi) == pytest.approx(tau, rel=1e-9)
    assert thickness(K).tau == pytest.approx(tau, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.15, 0.45), st.floats(0.15, 0.45))
def test_thickness_matches_brute_force(c1, c2):
    K = s_bridges(affine_s_system(c1, c2), 7)
    lo, hi, _ = K.line(7)
    assert thickness(K).tau == pytest.approx(brute_thickness(lo, hi), rel=1e-9)
    # self-similar closed form
    assert thickness(K).tau == pytest.approx(min(c1, c2) / (1 - c1 - c2), rel=1e-9)


def test_quadratic_thickness_grows_with_m():
    taus = [tent_thickness(m, 8).tau for m in range(3, 8)]
    assert all(b > a for a, b in zip(taus, taus[1:]))


@pytest.mark.parametrize("m", [3, 4, 5, 6, 7, 8])
def test_tent_coordinate_thickness(m):
    assert tent_coordinate_thickness(m) == 2 ** (m - 2) - 1
    assert tent_thickness(m, 6, x_coords=False).tau == pytest.approx(2 ** (m - 2) - 1, rel=1e-12)


def test_stream_agrees_with_cover():
    for m in (3, 4, 5):
        K = u_bridges_quadratic(-2, m, 6)
        assert tent_thickness(m, 6).tau == pytest.approx(thickness(K).tau, rel=1e-9)


def test_lower_bound_below_stream():
    for m in (4, 5, 6):
        lb = tent_thickness_lower_bound(m, 8)
        assert lb.valid
        assert lb.bound <= tent_thickness(m, 8).tau


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 6), st.integers(2, 6))
def test_backends_agree_tent(m, depth):
    ours = tent_thickness(m, depth).tau
    ref = _fallback.tent_stream_thickness(m, depth)[0]
    assert ours == pytest.approx(ref, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0.01, 1)), min_size=3, max_size=40,
                unique_by=lambda t: round(t[0], 6)))
def test_backends_agree_sorted(spans):
    spans = sorted(spans)
    lo, hi, cur = [], [], -1.0
    for start, width in spans:
        a = max(start, cur + 1e-3)
        lo.append(a)
        hi.append(a + width)
        cur = a + width
    lo, hi = np.array(lo), np.array(hi)
    from wanderlab.cantor.backend import kernels
    assert kernels.sorted_thickness(lo, hi)[0] == pytest.approx(_fallback.sorted_thickness(lo, hi)[0],
                                                                rel=1e-12)


def test_backend_name():
    assert BACKEND in {"compiled", "python"}


def test_gap_lemma_thick_pair():
    K1 = s_bridges(middle_cantor(1 / 5), 12)
    K2 = s_bridges(affine_s_system(0.4, 0.4, base=(0.1, 1.1)), 12)
    res = gap_lemma_check(K1, K2, 12)
    assert res.applicable and res.linked
    assert res.tau_product == pytest.approx(4.0, rel=1e-6)
    assert res.witness is not None
    for K in (K1, K2):
        lo, hi, _ = K.line(12)
        assert np.any((lo <= res.witness) & (res.witness <= hi))


def test_gap_lemma_unlinked():
    K1 = s_bridges(middle_cantor(1 / 3), 10)
    K2 = s_bridges(middle_cantor(1 / 5), 10)
    inside = s_bridges(affine_s_system(0.4, 0.4, base=(0.4, 0.6)), 10)
    res = gap_lemma_check(K1, inside, 10)
    assert not res.linked and not res.applicable
    assert res.witness is None
    assert gap_lemma_check(K1, K2, 10).linked


def test_gap_lemma_boundary_case():
    K1 = s_bridges(middle_cantor(1 / 3), 10)
    K2 = s_bridges(affine_s_system(1 / 3, 1 / 3, base=(0.1, 1.1)), 10)
    res = gap_lemma_check(K1, K2, 10)
    assert not res.applicable
    assert res.witness is None


def test_distortion_m4_letter_one():
    K = u_bridges_quadratic(-2, 4, 13)
    rep = distortion_report(K, range(6, 13))
    one = next(s for s in rep.letters if s.letter == 1)
    assert (one.lower, one.upper) == (1.5, 2.5)
    assert 1.5 <= one.min_ratio and one.max_ratio <= 2.5
    assert rep.min_child_over_bottom_interval >= 1 / 3
    assert rep.min_gap_over_child >= 2.0 ** -5


def test_ratio_bounds():
    for j in range(1, 6):
        assert u_ratio_bounds(j) == (3 * 2.0 ** (j - 2), 5 * 2.0 ** (j - 2))


def test_kappa_threshold_found():
    assert kappa_threshold(u_bridges_quadratic(-2, 3, 8)) is not None


def test_distortion_constant():
    assert distortion_constant(affine_s_system(0.3, 0.4), 0.1).c == 0.0
    sys = quadratic_u_system(-2, 3)
    big, small = distortion_constant(sys, 0.1), distortion_constant(sys, 0.05)
    assert small.c <= big.c
    assert big.exponent is not None and big.exponent > 0
