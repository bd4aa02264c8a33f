from __future__ import annotations

import math

import numpy as np
import pytest

from wanderlab.maps import ModelDiffeo, henon, henon_like
from wanderlab.saddle import (
    exact_renorm_model,
    find_saddles,
    manifold_curve,
    perturbed_renorm_model,
    polyline_intersections,
    renorm_defect,
    renorm_fit,
    tangency_bisect,
)

BOX = (-3.0, 3.0, -3.0, 3.0)


def henon_fixed_points(a: float, b: float) -> list[tuple[float, float]]:
    # a x^2 + (1 - b) x - 1 = 0, y = b x
    disc = math.sqrt((1 - b) ** 2 + 4 * a)
    xs = [(-(1 - b) + s * disc) / (2 * a) for s in (-1, 1)]
    return [(x, b * x) for x in xs]


def test_henon_like_saddles():
    pts = sorted(s.point for s in find_saddles(henon_like(-2, 0), BOX))
    assert pts[0] == pytest.approx((-1, -1), abs=1e-10)
    assert pts[1] == pytest.approx((2, 2), abs=1e-10)
    near = [s for s in find_saddles(henon_like(-2, 0.1), BOX) if math.dist(s.point, (2, 2)) < 0.2]
    assert len(near) == 1


def test_henon_saddles_closed_form():
    found = find_saddles(henon(2, 0.3), BOX)
    pts = sorted(s.point for s in found)
    assert pts == [pytest.approx(p, abs=1e-10) for p in sorted(henon_fixed_points(2, 0.3))]
    for s in found:
        assert s.eigenvalues[0] * s.eigenvalues[1] == pytest.approx(-0.3, abs=1e-10)


def test_linear_model_saddle():
    m = ModelDiffeo(lam=0.2, sigma=3.0)
    sad = [s for s in find_saddles(m.as_planar_map(), (-0.5, 0.5, -0.5, 0.5))]
    assert len(sad) == 1
    assert sad[0].point == pytest.approx((0, 0), abs=1e-12)
    assert sad[0].eigenvalues == pytest.approx((0.2, 3.0))
    curve = manifold_curve(m.as_planar_map(), sad[0], "unstable", 0.5)
    assert np.all(np.abs(curve.polyline[:, 0]) < 1e-12)


def test_unstable_curve_is_tangent_near_saddle():
    f = henon_like(-2, 0.1)
    P = next(s for s in find_saddles(f, BOX) if math.dist(s.point, (2, 2)) < 0.2)
    curve = manifold_curve(f, P, "unstable", 0.1, tol=1e-3)
    v = np.array(P.eigenvectors[1])
    rel = curve.polyline - np.array(P.point)
    normal_dist = np.abs(rel[:, 0] * v[1] - rel[:, 1] * v[0])
    assert normal_dist.max() < 1e-3


def _tangent(poly: np.ndarray, q) -> np.ndarray:
    i = int(np.argmin(np.hypot(poly[:, 0] - q[0], poly[:, 1] - q[1])))
    j = min(i + 1, len(poly) - 1)
    i = j - 1
    d = poly[j] - poly[i]
    return d / np.linalg.norm(d)


def test_henon_homoclinic_crossing_is_transverse():
    f = henon(2, 0.1)
    p = max(find_saddles(f, BOX), key=lambda s: s.point[0])
    U = manifold_curve(f, p, "unstable", 6.0)
    S = manifold_curve(f, p, "stable", 6.0)
    pts = [q for q in polyline_intersections(U.polyline, S.polyline)
           if math.dist(q, p.point) > 1e-3 and max(abs(q[0]), abs(q[1])) <= 2]
    assert pts
    # the crossing angle, read off the two segments meeting at the point
    sines = []
    for q in pts:
        (a, b), (c, d) = _tangent(U.polyline, q), _tangent(S.polyline, q)
        sines.append(abs(a * d - b * c))
    assert max(sines) > 0.05


def test_tangency_bisect_henon():
    r = tangency_bisect(henon, 0.1, (1.8, 1.9), tol=1e-5)
    assert r.residual <= 1e-5
    assert r.bracket[0] <= r.parameter <= r.bracket[1]
    # the certificate is a sign change of the fold excess over the final bracket
    assert r.bracket[1] - r.bracket[0] <= 2e-5
    assert r.parameter == pytest.approx(1.804074, abs=5e-5)


def test_tangency_bisect_one_dimensional_limit():
    r = tangency_bisect(henon, 0.0, (1.9, 2.1), tol=1e-6)
    assert r.parameter == pytest.approx(2.0, abs=1e-6)


def test_tangency_bisect_no_crossing():
    with pytest.raises(ArithmeticError):
        tangency_bisect(henon, 0.1, (1.0, 1.1))


def test_exact_renormalization():
    m = exact_renorm_model()
    for n in range(3, 9):
        assert renorm_defect(m, n, -1.0) <= 1e-8


def test_perturbed_renormalization_trend():
    m = perturbed_renorm_model()
    d = [renorm_defect(m, n, -1.0) for n in range(3, 9)]
    assert all(b <= 1.1 * a for a, b in zip(d, d[1:]))
    assert d[-1] < d[0]


def test_fitted_parameter_increases_with_target():
    m = perturbed_renorm_model()
    mus = [renorm_fit(m, 5, mb).mu for mb in (-1.5, -1.0, 0.0, 1.0)]
    assert all(b > a for a, b in zip(mus, mus[1:]))
