"""Saddle points, invariant-manifold polylines, homoclinic tangencies and the
renormalization defect of return maps near a tangency."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .maps import ChartError, EscapeError, ModelDiffeo, PlanarMap, model_eval

Point = tuple[float, float]


@dataclass(frozen=True)
class SaddleData:
    point: Point
    eigenvalues: tuple[float, float]  # (stable, unstable)
    eigenvectors: tuple[Point, Point]
    dissipative: bool

    @property
    def stable(self) -> float:
        return self.eigenvalues[0]

    @property
    def unstable(self) -> float:
        return self.eigenvalues[1]


@dataclass(frozen=True)
class ManifoldCurve:
    polyline: np.ndarray  # shape (n, 2)
    side: str
    arclength: float
    tol: float
    branch: int = 1

    def length(self) -> float:
        d = np.diff(self.polyline, axis=0)
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))


def _newton_fixed(f: PlanarMap, p: np.ndarray, tol: float, max_iter: int = 60) -> np.ndarray | None:
    for _ in range(max_iter):
        try:
            fp = np.array(f(p))
        except (EscapeError, OverflowError, ChartError):
            return None
        g = fp - p
        J = f.jacobian(tuple(p)) - np.eye(2)
        try:
            step = np.linalg.solve(J, g)
        except np.linalg.LinAlgError:
            return None
        p = p - step
        if not np.all(np.isfinite(p)):
            return None
        if np.max(np.abs(step)) < tol * 1e-3:
            break
    try:
        if np.max(np.abs(np.array(f(p)) - p)) > tol:
            return None
    except (EscapeError, OverflowError, ChartError):
        return None
    return p


def saddle_data(f: PlanarMap, p: Sequence[float]) -> SaddleData | None:
    """Eigen-data at a fixed point, or None if it is not a (real) saddle."""
    J = f.jacobian((float(p[0]), float(p[1])))
    w, v = np.linalg.eig(J)
    if np.any(np.abs(np.imag(w)) > 0):
        return None
    w = np.real(w)
    v = np.real(v)
    order = np.argsort(np.abs(w))
    ls, lu = w[order[0]], w[order[1]]
    if not (abs(ls) < 1.0 < abs(lu)):
        return None
    vs = v[:, order[0]] / np.linalg.norm(v[:, order[0]])
    vu = v[:, order[1]] / np.linalg.norm(v[:, order[1]])
    return SaddleData((float(p[0]), float(p[1])), (float(ls), float(lu)),
                      ((float(vs[0]), float(vs[1])), (float(vu[0]), float(vu[1]))),
                      bool(abs(ls * lu) < 1.0))


def find_saddles(f: PlanarMap, box: tuple[float, float, float, float], grid: int = 20,
                 tol: float = 1e-10) -> list[SaddleData]:
    """Newton-refined saddle fixed points started from a grid over the box, deduplicated within tol."""
    if grid < 2 or tol <= 0:
        raise ValueError("need grid >= 2 and tol > 0")
    xs = np.linspace(box[0], box[1], grid)
    ys = np.linspace(box[2], box[3], grid)
    found: list[np.ndarray] = []
    for x in xs:
        for y in ys:
            p = _newton_fixed(f, np.array([x, y], dtype=float), tol)
            if p is None:
                continue
            if not (box[0] - 1e-9 <= p[0] <= box[1] + 1e-9 and box[2] - 1e-9 <= p[1] <= box[3] + 1e-9):
                continue
            if any(np.max(np.abs(p - q)) <= max(tol, 1e-9) * 10 for q in found):
                continue
            found.append(p)
    out = []
    for p in sorted(found, key=lambda q: (q[0], q[1])):
        sd = saddle_data(f, p)
        if sd is not None:
            out.append(sd)
    return out


def manifold_curve(f: PlanarMap, saddle: SaddleData, side: str, arclength: float,
                   tol: float = 1e-2, branch: int = 1, h: float = 1e-7,
                   max_points: int = 200_000) -> ManifoldCurve:
    """Polyline of one branch of W^u (side='unstable') or W^s (side='stable').

    A fundamental segment on the eigen-line is pushed forward by f (or f^-1) and
    subdivided so consecutive image points stay within `tol`. Negative eigenvalues
    are handled with the second iterate so that each branch maps to itself.
    """
    if side == "unstable":
        g, lam, v = f.eval, saddle.unstable, saddle.eigenvectors[1]
    elif side == "stable":
        if f.inverse is None:
            raise ValueError("stable side needs the inverse map")
        g, lam, v = f.inverse, 1.0 / saddle.stable, saddle.eigenvectors[0]
    else:
        raise ValueError("side must be 'stable' or 'unstable'")
    power = 2 if lam < 0 else 1
    factor = abs(lam) ** power
    p0 = np.array(saddle.point)
    dv = branch * np.array(v)

    def seed(s: np.ndarray) -> np.ndarray:
        # s in [0,1] -> points between p0 + h v and p0 + h*factor*v
        r = h * (1.0 + s * (factor - 1.0))
        return p0[None, :] + r[:, None] * dv[None, :]

    def push(pts: np.ndarray, k: int) -> np.ndarray:
        out = pts.copy()
        for i in range(len(out)):
            x = (float(out[i, 0]), float(out[i, 1]))
            for _ in range(k * power):
                x = g(x)
            out[i] = x
        return out

    curve = [p0[None, :]]
    total = 0.0
    k = 0
    s = np.linspace(0.0, 1.0, 9)
    while total < arclength:
        pts = push(seed(s), k)
        while True:
            d = np.hypot(*np.diff(pts, axis=0).T)
            # chords never exceed arclength, so anything past the remaining budget is unneeded
            cum = np.cumsum(d)
            over = np.nonzero(cum >= arclength - total)[0]
            if len(over):
                s, pts, d = s[: over[0] + 2], pts[: over[0] + 2], d[: over[0] + 1]
            bad = np.nonzero(d > tol)[0]
            if len(bad) == 0:
                break
            mids = 0.5 * (s[bad] + s[bad + 1])
            s = np.sort(np.concatenate([s, mids]))
            pts = push(seed(s), k)
            if len(s) > max_points:
                raise ArithmeticError("manifold refinement exceeded max_points")
        d = np.hypot(*np.diff(pts, axis=0).T)
        cum = np.concatenate([[0.0], np.cumsum(d)])
        if total + cum[-1] >= arclength:
            keep = np.searchsorted(cum, arclength - total, side="right")
            pts = pts[: max(keep, 1)]
            curve.append(pts)
            total = arclength
            break
        curve.append(pts)
        total += cum[-1]
        k += 1
        if k > 200:
            raise ArithmeticError("arclength budget not reached")
    poly = np.concatenate(curve)
    return ManifoldCurve(poly, side, float(total), tol, branch)


# ---------------------------------------------------------------- tangencies


def polyline_intersections(P: np.ndarray, Q: np.ndarray) -> list[Point]:
    """Segment intersections between two polylines (brute force with bounding-box pruning)."""
    out = []
    a0, a1 = P[:-1], P[1:]
    for j in range(len(Q) - 1):
        b0, b1 = Q[j], Q[j + 1]
        lo = np.minimum(b0, b1)
        hi = np.maximum(b0, b1)
        cand = np.nonzero((np.maximum(a0[:, 0], a1[:, 0]) >= lo[0]) & (np.minimum(a0[:, 0], a1[:, 0]) <= hi[0])
                          & (np.maximum(a0[:, 1], a1[:, 1]) >= lo[1]) & (np.minimum(a0[:, 1], a1[:, 1]) <= hi[1]))[0]
        for i in cand:
            r = a1[i] - a0[i]
            s = b1 - b0
            den = r[0] * s[1] - r[1] * s[0]
            if den == 0.0:
                continue
            w = b0 - a0[i]
            t = (w[0] * s[1] - w[1] * s[0]) / den
            u = (w[0] * r[1] - w[1] * r[0]) / den
            if 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0:
                out.append((float(a0[i, 0] + t * r[0]), float(a0[i, 1] + t * r[1])))
    return out


@dataclass(frozen=True)
class TangencyResult:
    parameter: float
    residual: float
    second_derivative: float
    bracket: tuple[float, float]


def henon_left_saddle(a: float, b: float) -> Point:
    x = (-(1.0 - b) - math.sqrt((1.0 - b) ** 2 + 4.0 * a)) / (2.0 * a)
    return (x, b * x)


def fold_excess(family: Callable[[float, float], PlanarMap], a: float, b: float,
                window: tuple[float, float, float, float] | None = None,
                saddle_guess: Callable[[float, float], Point] = henon_left_saddle,
                tol: float = 1e-3, arclength_u: float = 15.0,
                arclength_s: float = 0.6) -> tuple[float, np.ndarray]:
    """Signed excess of a W^u fold beyond the local W^s branch, along horizontal fibres.

    `window` is (dx_lo, dx_hi, dy_lo, dy_hi) relative to the saddle; by default it
    surrounds the fold tip at height about 2b above the saddle. Horizontal fibres
    cross the steep local stable branch transversally, so W^s is a graph x_s(y) there.
    The excess is max(x_s(y) - x_u) over W^u points in the window: positive when the
    fold tip crosses W^s, negative when it falls short. Also returns the excess profile
    (arclength, excess) along the arc of W^u that realizes the maximum.
    """
    f = family(a, b)
    p = saddle_guess(a, b)
    sd = saddle_data(f, p)
    if sd is None:
        raise ArithmeticError("no saddle at the guessed point")
    if window is None:
        window = (-0.5, 0.5, 0.5 * abs(b), 4.0 * abs(b))
    x0, x1 = p[0] + window[0], p[0] + window[1]
    y0, y1 = p[1] + window[2], p[1] + window[3]
    cs = np.concatenate([manifold_curve(f, sd, "stable", arclength_s, tol, br).polyline for br in (1, -1)])
    cs = cs[(cs[:, 1] >= y0) & (cs[:, 1] <= y1)]
    if len(cs) < 4:
        raise ArithmeticError("local stable branch does not cover the window")
    order = np.argsort(cs[:, 1])
    ys, xs = cs[order, 1], cs[order, 0]
    best, profile = -math.inf, np.empty(0)
    for br in (1, -1):
        cu = manifold_curve(f, sd, "unstable", arclength_u, tol, br).polyline
        inside = (cu[:, 0] >= x0) & (cu[:, 0] <= x1) & (cu[:, 1] >= ys[0]) & (cu[:, 1] <= ys[-1])
        if not np.any(inside):
            continue
        exc = np.interp(cu[:, 1], ys, xs) - cu[:, 0]
        exc[~inside] = -math.inf
        i = int(np.argmax(exc))
        if exc[i] > best:
            lo = i
            while lo > 0 and inside[lo - 1]:
                lo -= 1
            hi = i
            while hi < len(cu) - 1 and inside[hi + 1]:
                hi += 1
            seg = cu[lo:hi + 1]
            arc = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(seg, axis=0).T))])
            best, profile = float(exc[i]), np.column_stack([arc, exc[lo:hi + 1]])
    if best == -math.inf:
        raise ArithmeticError("unstable manifold does not reach the window")
    return best, profile


def tangency_bisect(family: Callable[[float, float], PlanarMap], b: float,
                    a_range: tuple[float, float], tol: float = 1e-6,
                    **kwargs) -> TangencyResult:
    """Parameter where the fold excess of W^u over W^s changes sign.

    For b = 0 the map is one-dimensional and the tangency becomes the critical-orbit
    condition f_a^2(0) = (repelling fixed point of x -> 1 - a x^2).
    """
    lo, hi = a_range
    if b == 0.0:
        def g(a: float) -> float:
            xp = (-1.0 - math.sqrt(1.0 + 4.0 * a)) / (2.0 * a)
            return (1.0 - a) - xp

        glo, ghi = g(lo), g(hi)
        if glo * ghi > 0:
            raise ArithmeticError("no sign change of the critical-orbit condition")
        a_star = brentq(g, lo, hi, xtol=tol)
        return TangencyResult(a_star, abs(g(a_star)), 2.0, (lo, hi))

    def D(a: float) -> float:
        return fold_excess(family, a, b, **kwargs)[0]

    dlo, dhi = D(lo), D(hi)
    if dlo * dhi > 0:
        raise ArithmeticError("no sign change of the fold excess over the range")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        dm = D(mid)
        if dm * dlo > 0:
            lo, dlo = mid, dm
        else:
            hi, dhi = mid, dm
    a_star = 0.5 * (lo + hi)
    # quadratic contact: fit a parabola in arclength around the maximum of the profile
    _, prof = fold_excess(family, a_star, b, **kwargs)
    i = int(np.argmax(prof[:, 1]))
    near = np.abs(prof[:, 0] - prof[i, 0]) <= 0.05
    if np.count_nonzero(near) < 5:
        raise ArithmeticError("profile too coarse for a contact-order check")
    c2, c1, _ = np.polyfit(prof[near, 0] - prof[i, 0], prof[near, 1], 2)
    curv = float(2.0 * c2)
    if abs(c1) > 1e-2 or abs(curv) < 1e-3:
        raise ArithmeticError("contact is not quadratic")
    return TangencyResult(a_star, abs(D(a_star)), curv, (lo, hi))


# ---------------------------------------------------------------- renormalization


@dataclass(frozen=True)
class RenormFit:
    n: int
    mu: float          # model parameter Theta_n(mu_bar)
    mu_bar: float
    x_center: float
    v_center: float
    scale_x: float
    scale_y: float
    defect: float


def return_map(model: ModelDiffeo, n: int) -> Callable[[float, float], Point]:
    """f^(n+1): n steps in the square to reach the fold chart, then the fold."""
    def R(x: float, v: float) -> Point:
        p = (x, v)
        for _ in range(n + 1):
            p = model_eval(model, p)
        return p
    return R


def _with_mu(model: ModelDiffeo, mu: float) -> ModelDiffeo:
    from dataclasses import replace
    return replace(model, mu=mu)


def _derivs(g: Callable[[float], float], v: float, h: float) -> tuple[float, float]:
    """Five-point first and second derivatives (exact for quartic g up to rounding)."""
    f2, f1, f0, fm1, fm2 = g(v + 2 * h), g(v + h), g(v), g(v - h), g(v - 2 * h)
    d1 = (-f2 + 8 * f1 - 8 * fm1 + fm2) / (12 * h)
    d2 = (-f2 + 16 * f1 - 30 * f0 + 16 * fm1 - fm2) / (12 * h * h)
    return d1, d2


def _normalization(model: ModelDiffeo, n: int) -> tuple[float, float, float, float]:
    """Fit (x_c, v_c, k_x, k_y): critical point of the vertical return coordinate
    and the scalings giving unit quadratic coefficient and x' = y."""
    R = return_map(model, n)
    yc = model.fold_center[1]
    v = yc * model.sigma ** -n
    x = model.q[0]
    h = 1e-3 * model.sigma ** -n
    for _ in range(3):
        for _ in range(30):
            d1, d2 = _derivs(lambda t: R(x, t)[1], v, h)
            if d2 == 0.0:
                raise ArithmeticError("degenerate fold: zero second derivative")
            step = d1 / d2
            v -= step
            if abs(step) < 1e-15 * abs(v):
                break
        x = R(x, v)[0]
    _, d2 = _derivs(lambda t: R(x, t)[1], v, h)
    slope, _ = _derivs(lambda t: R(x, t)[0], v, h)
    k_y = 0.5 * d2
    k_x = k_y / slope
    return x, v, k_x, k_y


def renorm_fit(model: ModelDiffeo, n: int, mu_bar: float, probe: float = 1.0,
               grid: int = 21, mu_window: float | None = None) -> RenormFit:
    """Affinely renormalize the return map and measure its sup-distance to (y, y^2 + mu_bar)."""
    if n < 1:
        raise ValueError("n must be positive")
    if model.fold_center[1] * model.sigma ** -1 > 2.0:
        raise ValueError("return window empty: fold chart not reachable from the square")

    def mu_bar_of(mu: float) -> float:
        m = _with_mu(model, mu)
        x, v, kx, ky = _normalization(m, n)
        return ky * (return_map(m, n)(x, v)[1] - v)

    x0, v0, kx0, ky0 = _normalization(model, n)
    # mu_bar depends on mu with slope close to k_y: start from the linear guess
    center = model.mu + (mu_bar - mu_bar_of(model.mu)) / ky0
    span = mu_window if mu_window is not None else 0.05 * (abs(mu_bar) + probe ** 2 + 1.0) / ky0
    a, b = center - span, center + span
    fa, fb = mu_bar_of(a) - mu_bar, mu_bar_of(b) - mu_bar
    if fa * fb > 0:
        raise ArithmeticError("return window empty: mu_bar not reached")
    mu = brentq(lambda t: mu_bar_of(t) - mu_bar, a, b, xtol=1e-15 * max(1.0, abs(center)), rtol=1e-15,
                maxiter=200)
    m = _with_mu(model, mu)
    x, v, kx, ky = _normalization(m, n)
    R = return_map(m, n)
    worst = 0.0
    for xb in np.linspace(-probe, probe, grid):
        for yb in np.linspace(-probe, probe, grid):
            try:
                X, V = R(x + xb / kx, v + yb / ky)
            except ChartError as exc:
                raise ArithmeticError("return window empty on the probe grid") from exc
            xn, yn = kx * (X - x), ky * (V - v)
            worst = max(worst, abs(xn - yb), abs(yn - (yb * yb + mu_bar)))
    return RenormFit(n, mu, mu_bar, x, v, kx, ky, worst)


def renorm_defect(model: ModelDiffeo, n: int, mu_bar: float, **kwargs) -> float:
    return renorm_fit(model, n, mu_bar, **kwargs).defect


def exact_renorm_model(lam: float = 0.2, sigma: float = 3.0) -> ModelDiffeo:
    """Fold with no x-coupling and no cubic term: return maps renormalize exactly."""
    return ModelDiffeo(lam=lam, sigma=sigma, kappa2=0.0, fold_cubic=0.0)


def perturbed_renorm_model(lam: float = 0.2, sigma: float = 3.0, coupling: float = 0.5,
                           cubic: float = 0.3) -> ModelDiffeo:
    return ModelDiffeo(lam=lam, sigma=sigma, kappa2=coupling, fold_cubic=cubic)
