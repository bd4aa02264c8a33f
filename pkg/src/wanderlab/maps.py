"""Map families: Hénon, Hénon-like, the real quadratic family, the tent map,
and an idealized saddle-plus-fold model diffeomorphism."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

Point = tuple[float, float]

ESCAPE_BOX: tuple[float, float, float, float] = (-10.0, 10.0, -10.0, 10.0)


class EscapeError(ArithmeticError):
    """Raised when an evaluation overflows or an orbit leaves its bounding box."""

    def __init__(self, message: str, index: int | None = None) -> None:
        super().__init__(message)
        self.index = index


class ChartError(ValueError):
    """Raised when a point lies outside every chart of a model diffeomorphism."""


def _check_finite(p: Sequence[float]) -> Point:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise EscapeError(f"non-finite value {p!r}")
    return x, y


# ---------------------------------------------------------------- planar maps


@dataclass(frozen=True)
class PlanarMap:
    """A smooth map of the plane with its Jacobian and, optionally, its inverse."""

    eval: Callable[[Point], Point]
    jacobian: Callable[[Point], np.ndarray]
    inverse: Callable[[Point], Point] | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    name: str = "map"

    def __call__(self, p: Sequence[float]) -> Point:
        return self.eval(_check_finite(p))


@dataclass(frozen=True)
class ScalarMap:
    eval: Callable[[float], float]
    derivative: Callable[[float], float]
    params: Mapping[str, float] = field(default_factory=dict)
    name: str = "scalar"

    def __call__(self, x: float) -> float:
        return self.eval(float(x))


def henon_eval(a: float, b: float, p: Sequence[float]) -> Point:
    x, y = _check_finite(p)
    return _check_finite((1.0 - a * x * x + y, b * x))


def henon_like_eval(mu: float, nu: float, p: Sequence[float]) -> Point:
    x, y = _check_finite(p)
    return _check_finite((y, mu + nu * x + y * y))


def quad_eval(mu: float, x: float) -> float:
    return x * x + mu


def henon(a: float, b: float) -> PlanarMap:
    def jac(p: Point) -> np.ndarray:
        return np.array([[-2.0 * a * p[0], 1.0], [b, 0.0]])

    inv = None
    if b != 0.0:
        def inv(p: Point) -> Point:
            x = p[1] / b
            return (x, p[0] - 1.0 + a * x * x)

    return PlanarMap(lambda p: henon_eval(a, b, p), jac, inv, {"a": a, "b": b}, "henon")


def henon_like(mu: float, nu: float) -> PlanarMap:
    """(x, y) -> (y, mu + nu x + y^2); determinant of the Jacobian is -nu."""

    def jac(p: Point) -> np.ndarray:
        return np.array([[0.0, 1.0], [nu, 2.0 * p[1]]])

    inv = None
    if nu != 0.0:
        def inv(p: Point) -> Point:
            X, Y = p
            return ((Y - mu - X * X) / nu, X)

    return PlanarMap(lambda p: henon_like_eval(mu, nu, p), jac, inv,
                     {"mu": mu, "nu": nu}, "henon_like")


def quadratic(mu: float) -> ScalarMap:
    return ScalarMap(lambda x: x * x + mu, lambda x: 2.0 * x, {"mu": mu}, "quadratic")


def tent(x: float) -> float:
    return 1.0 - abs(2.0 * x - 1.0)


def tent_conjugacy(x: float) -> float:
    """Semiconjugacy from the tent map to x -> x^2 - 2: g(x) = 2 cos(pi x)."""
    return 2.0 * math.cos(math.pi * x)


def conjugacy_defect(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    return abs(quad_eval(-2.0, tent_conjugacy(x)) - tent_conjugacy(tent(x)))


# ---------------------------------------------------------------- orbits


@dataclass(frozen=True)
class Orbit:
    points: tuple
    start: int = 0
    escaped_at: int | None = None

    def __len__(self) -> int:
        return len(self.points)


def iterate(f: Callable, p, n: int, box: tuple[float, float, float, float] | None = ESCAPE_BOX,
            raise_on_escape: bool = False) -> Orbit:
    """Orbit of length n+1. Works for planar maps (tuples) and scalar maps (floats)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    pts = [p]
    escaped = None
    for i in range(1, n + 1):
        try:
            p = f(p)
        except (EscapeError, OverflowError) as exc:
            escaped = i
            if raise_on_escape:
                raise EscapeError(str(exc), i) from exc
            break
        pts.append(p)
        if box is not None and _outside(p, box):
            escaped = i
            if raise_on_escape:
                raise EscapeError(f"orbit left the box at index {i}", i)
            break
    return Orbit(tuple(pts), 0, escaped)


def _outside(p, box) -> bool:
    if isinstance(p, (tuple, list, np.ndarray)):
        x, y = p[0], p[1]
        return not (box[0] <= x <= box[1] and box[2] <= y <= box[3]) or not (
            math.isfinite(x) and math.isfinite(y))
    return not (box[0] <= p <= box[1]) or not math.isfinite(p)


# ---------------------------------------------------------------- model diffeo


@dataclass(frozen=True)
class AffineTube:
    """A box on which the model acts by a fixed affine map p -> A p + b."""

    name: str
    box: tuple[float, float, float, float]
    matrix: tuple[tuple[float, float], tuple[float, float]]
    offset: Point
    iterates: int = 1

    def contains(self, p: Point) -> bool:
        return self.box[0] <= p[0] <= self.box[1] and self.box[2] <= p[1] <= self.box[3]

    def __call__(self, p: Point) -> Point:
        (a, b), (c, d) = self.matrix
        return (a * p[0] + b * p[1] + self.offset[0], c * p[0] + d * p[1] + self.offset[1])


@dataclass(frozen=True)
class ModelDiffeo:
    """Idealized diffeomorphism: exact linear saddle on S=[0,2]^2, a quadratic fold
    from a chart around `fold_center` onto a neighbourhood of the tangency point `q`,
    and affine transition tubes.

    The fold sends (x, y) to q + (k1*(y - yc), mu + k2*x + A*(y - yc)^2 + c3*(y - yc)^3); its image of the
    vertical line through the fold centre touches W^s_loc = [0,2]x{0} quadratically at q
    when mu = 0.
    """

    lam: float = 0.2
    sigma: float = 3.0
    q: Point = (1.0, 0.0)
    fold_center: Point = (0.0, 2.5)
    fold_radius: float = 0.5
    kappa1: float = 1.0
    kappa2: float = 1.0
    fold_quad: float = 1.0
    fold_cubic: float = 0.0
    mu: float = 0.0
    tubes: tuple[AffineTube, ...] = ()
    N0: int = 1
    N1: int = 1
    N2: int = 1
    N_star: int = 1
    n_star: int = 1
    escape_box: tuple[float, float, float, float] = ESCAPE_BOX

    def __post_init__(self) -> None:
        if not (0.0 < self.lam < 1.0 < self.sigma and self.lam * self.sigma < 1.0):
            raise ValueError("need 0 < lam < 1 < sigma and lam*sigma < 1")
        # kappa2 = 0 is allowed: the fold then forgets x, which gives a model whose
        # return maps renormalize exactly (it is no longer a local diffeomorphism)
        if self.kappa1 == 0.0 or self.fold_quad == 0.0:
            raise ValueError("fold needs nonzero linear and quadratic coefficients")

    def in_square(self, p: Point) -> bool:
        return 0.0 <= p[0] <= 2.0 and 0.0 <= p[1] <= 2.0

    def in_fold(self, p: Point) -> bool:
        cx, cy = self.fold_center
        r = self.fold_radius
        return abs(p[0] - cx) <= r and abs(p[1] - cy) <= r

    def fold(self, p: Point) -> Point:
        dy = p[1] - self.fold_center[1]
        dx = p[0] - self.fold_center[0]
        return (self.q[0] + self.kappa1 * dy,
                self.q[1] + self.mu + self.kappa2 * dx + self.fold_quad * dy * dy
                + self.fold_cubic * dy ** 3)

    def fold_jacobian(self, p: Point) -> np.ndarray:
        dy = p[1] - self.fold_center[1]
        return np.array([[0.0, self.kappa1],
                         [self.kappa2, 2.0 * self.fold_quad * dy + 3.0 * self.fold_cubic * dy * dy]])

    def chart_of(self, p: Point) -> str:
        if self.in_square(p):
            return "square"
        if self.in_fold(p):
            return "fold"
        for t in self.tubes:
            if t.contains(p):
                return t.name
        raise ChartError(f"{p!r} lies outside every chart")

    def __call__(self, p: Sequence[float]) -> Point:
        return model_eval(self, p)

    def jacobian(self, p: Point) -> np.ndarray:
        chart = self.chart_of(p)
        if chart == "square":
            return np.diag([self.lam, self.sigma])
        if chart == "fold":
            return self.fold_jacobian(p)
        tube = next(t for t in self.tubes if t.name == chart)
        return np.array(tube.matrix, dtype=float)

    def as_planar_map(self) -> PlanarMap:
        return PlanarMap(self.__call__, self.jacobian, None,
                         {"lam": self.lam, "sigma": self.sigma, "mu": self.mu}, "model")


def model_eval(model: ModelDiffeo, p: Sequence[float]) -> Point:
    p = _check_finite(p)
    chart = model.chart_of(p)
    if chart == "square":
        return (model.lam * p[0], model.sigma * p[1])
    if chart == "fold":
        return model.fold(p)
    tube = next(t for t in model.tubes if t.name == chart)
    return tube(p)


def default_model(lam: float = 0.2, sigma: float = 3.0, mu: float = 0.0) -> ModelDiffeo:
    """Model with three transition tubes placed to the right of S."""
    tubes = (
        AffineTube("tube0", (3.0, 4.0, -1.0, 1.0), ((0.5, 0.0), (0.0, 2.0)), (2.0, 0.0), 1),
        AffineTube("tube1", (5.0, 6.0, -1.0, 1.0), ((2.0, 0.0), (0.0, 0.5)), (-3.0, 0.0), 1),
        AffineTube("tube2", (7.0, 8.0, -1.0, 1.0), ((1.0, 0.0), (0.0, 1.0)), (-7.0, 2.5), 1),
    )
    return ModelDiffeo(lam=lam, sigma=sigma, mu=mu, tubes=tubes)


# ---------------------------------------------------------------- helpers


def finite_difference_jacobian(f: Callable[[Point], Point], p: Point, h: float = 1e-6) -> np.ndarray:
    out = np.empty((2, 2))
    for j in range(2):
        e = [0.0, 0.0]
        e[j] = h
        fp = f((p[0] + e[0], p[1] + e[1]))
        fm = f((p[0] - e[0], p[1] - e[1]))
        out[0, j] = (fp[0] - fm[0]) / (2 * h)
        out[1, j] = (fp[1] - fm[1]) / (2 * h)
    return out


def period_orbit_quadratic(mu: float, m: int, guess: float, tol: float = 1e-14,
                           max_iter: int = 100) -> list[float]:
    """Newton on F^m(x) = x for F(x) = x^2 + mu; returns the orbit starting at the root."""
    x = guess
    for _ in range(max_iter):
        y, d = x, 1.0
        for _ in range(m):
            d *= 2.0 * y
            y = y * y + mu
        g, dg = y - x, d - 1.0
        if dg == 0.0:
            break
        step = g / dg
        x -= step
        if abs(step) < tol:
            break
    orbit = [x]
    for _ in range(m - 1):
        orbit.append(orbit[-1] ** 2 + mu)
    if abs(orbit[-1] ** 2 + mu - x) > 1e-9:
        raise ArithmeticError(f"period-{m} orbit not found from guess {guess}")
    return orbit
