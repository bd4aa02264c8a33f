"""Bump functions, the local delta-shift, and switchback perturbation series.

Everything here is a smooth, explicit construction: a C-infinity step, the
two-sided bumps built from it, planar isometries that nudge marked points, and
the composite map that glues infinitely many such nudges on disjoint supports.
C^r norms are measured with Richardson-extrapolated central differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .maps import PlanarMap, Point

MAX_ORDER = 6


class PerturbationError(ValueError):
    """A precondition of a perturbation construction failed."""


# ---------------------------------------------------------------- smooth step


def _h(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t, dtype=float)
    pos = t > 0
    with np.errstate(over="ignore"):  # 1/t overflows for subnormal t; exp(-inf) = 0 is exact
        out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(x) -> np.ndarray | float:
    """Non-decreasing C-infinity step: 0 for x <= -1, 1 for x >= 0."""
    arr = np.asarray(x, dtype=float)
    a = _h(arr + 1.0)
    b = _h(-arr)
    val = a / (a + b)
    return float(val) if val.ndim == 0 else val


def _binom_stencil(n: int) -> tuple[np.ndarray, np.ndarray]:
    j = np.arange(n + 1)
    weights = np.array([(-1) ** int(k) * math.comb(n, int(k)) for k in j], dtype=float)
    return n / 2.0 - j, weights


def fd_derivative(f: Callable[[np.ndarray], np.ndarray], x, n: int, h: float) -> np.ndarray:
    """n-th derivative of a vectorized f by central differences with one Richardson step.

    Truncation error is O(h^4); roundoff grows like eps / h^n.
    """
    x = np.asarray(x, dtype=float)
    if n == 0:
        return np.asarray(f(x), dtype=float)
    if n > MAX_ORDER:
        raise PerturbationError(f"derivative order {n} above the supported {MAX_ORDER}")
    offsets, weights = _binom_stencil(n)

    def central(step: float) -> np.ndarray:
        acc = 0.0
        for o, w in zip(offsets, weights):
            acc = acc + w * np.asarray(f(x + o * step), dtype=float)
        return acc / step ** n

    coarse = central(h)
    fine = central(h / 2.0)
    return (4.0 * fine - coarse) / 3.0


@lru_cache(maxsize=None)
def step_norm(r: int, samples: int = 4001) -> float:
    """Measured C^r norm of the smooth step: max over orders <= r of sup |s^(j)|."""
    if not 0 <= r <= MAX_ORDER:
        raise PerturbationError(f"order r={r} outside 0..{MAX_ORDER}")
    xs = np.linspace(-1.0, 0.0, samples)
    best = 1.0
    for j in range(1, r + 1):
        best = max(best, float(np.max(np.abs(fd_derivative(smooth_step, xs, j, 1.0 / 128)))))
    return best


# ---------------------------------------------------------------- bumps


@dataclass(frozen=True)
class BumpSpec:
    """Two-sided bump equal to 1 on [a, b] and supported on the rho-widened interval."""

    rho: float
    a: float
    b: float

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise PerturbationError("rho must be positive")
        if not self.b > self.a:
            raise PerturbationError("bump interval must satisfy a < b")

    @property
    def ramp(self) -> float:
        return self.rho * (self.b - self.a)

    @property
    def support(self) -> tuple[float, float]:
        return self.a - self.ramp, self.b + self.ramp

    def __call__(self, x):
        return bump_eval(self, x)


def bump_eval(spec: BumpSpec, x):
    """Evaluate S(x) = s((x-a)/w) + s((b-x)/w) - 1 with w = rho (b - a)."""
    arr = np.asarray(x, dtype=float)
    w = spec.ramp
    val = smooth_step((arr - spec.a) / w) + smooth_step((spec.b - arr) / w) - 1.0
    val = np.clip(val, 0.0, 1.0)
    return float(val) if np.ndim(val) == 0 else val


def bump_cr_norm(spec: BumpSpec, r: int, samples: int = 2001) -> float:
    """Max over derivative orders 0..r of the sampled sup of |S^(j)|.

    Only the two ramps carry nonzero derivatives, so the grid covers those.
    """
    if not 0 <= r <= MAX_ORDER:
        raise PerturbationError(f"order r={r} outside 0..{MAX_ORDER}")
    w = spec.ramp
    step = w / (samples - 1)
    if step > w / 200:
        raise PerturbationError(f"grid too coarse: step {step:.3g} vs ramp width {w:.3g}")
    left = np.linspace(spec.a - w, spec.a, samples)
    right = np.linspace(spec.b, spec.b + w, samples)
    xs = np.concatenate([left, right])
    best = float(np.max(bump_eval(spec, xs)))
    f = lambda t: bump_eval(spec, t)  # noqa: E731
    for j in range(1, r + 1):
        best = max(best, float(np.max(np.abs(fd_derivative(f, xs, j, w / 128)))))
    return best


def bump_norm_bound(spec: BumpSpec, r: int, step_r_norm: float | None = None) -> float:
    """Scaling bound ||s||_r / (rho (b - a))^r."""
    s_r = step_norm(r) if step_r_norm is None else step_r_norm
    return s_r / spec.ramp ** r


# ---------------------------------------------------------------- delta shift


def _in_rect(p: Point, rect: Sequence[float]) -> bool:
    x0, x1, y0, y1 = rect
    return x0 <= p[0] <= x1 and y0 <= p[1] <= y1


@dataclass(frozen=True)
class DiskShift:
    """h_delta: identity off the disk of radius r0, translation by (delta, 0) on radius r0/2."""

    delta: float
    center: Point
    r0: float

    def weight(self, p) -> np.ndarray | float:
        d = np.hypot(np.asarray(p[0]) - self.center[0], np.asarray(p[1]) - self.center[1])
        half = self.r0 / 2.0
        return smooth_step((half - d) / half)

    def __call__(self, p: Sequence[float]) -> Point:
        wgt = float(self.weight(p))
        return float(p[0]) + self.delta * wgt, float(p[1])

    def inverse(self, q: Sequence[float], tol: float = 1e-15, max_iter: int = 200) -> Point:
        x = float(q[0])
        for _ in range(max_iter):
            nxt = float(q[0]) - self.delta * float(self.weight((x, q[1])))
            if abs(nxt - x) <= tol * max(1.0, abs(x)):
                return nxt, float(q[1])
            x = nxt
        return x, float(q[1])

    def jacobian(self, p: Sequence[float]) -> np.ndarray:
        h = self.r0 * 1e-6
        gx = (float(self.weight((p[0] + h, p[1]))) - float(self.weight((p[0] - h, p[1])))) / (2 * h)
        gy = (float(self.weight((p[0], p[1] + h))) - float(self.weight((p[0], p[1] - h)))) / (2 * h)
        return np.array([[1.0 + self.delta * gx, self.delta * gy], [0.0, 1.0]])


def delta_shift(f: PlanarMap, delta: float, center: Point, r0: float,
                protected: Sequence[Sequence[float]] = (), samples: int = 48) -> PlanarMap:
    """Return h_delta o f, which shifts images landing in the inner disk by (delta, 0).

    The preimage of the outer disk must avoid both the disk itself and every
    protected rectangle (x0, x1, y0, y1); this is checked on a polar sample.
    """
    if not r0 > 0:
        raise PerturbationError("disk radius must be positive")
    if abs(delta) > r0 / 10.0:
        raise PerturbationError(f"|delta|={abs(delta):.3g} exceeds r0/10={r0 / 10:.3g}")
    if f.inverse is None:
        raise PerturbationError("delta_shift needs an invertible map to check disjointness")
    for rad in np.linspace(0.0, r0, samples // 4 + 1):
        for ang in np.linspace(0.0, 2 * math.pi, samples, endpoint=False):
            q = (center[0] + rad * math.cos(ang), center[1] + rad * math.sin(ang))
            pre = f.inverse(q)
            if math.hypot(pre[0] - center[0], pre[1] - center[1]) <= r0:
                raise PerturbationError("disjointness violated: preimage of the disk meets the disk")
            if any(_in_rect(pre, rect) for rect in protected):
                raise PerturbationError("disjointness violated: preimage of the disk meets a protected region")
    shift = DiskShift(delta, (float(center[0]), float(center[1])), float(r0))

    def ev(p: Point) -> Point:
        return shift(f(p))

    def jac(p: Point) -> np.ndarray:
        return shift.jacobian(f(p)) @ f.jacobian(p)

    def inv(q: Point) -> Point:
        return f.inverse(shift.inverse(q))

    params = dict(f.params)
    params.update(delta=delta, r0=r0)
    return PlanarMap(ev, jac, inv, params, f"{f.name}+shift")


# ---------------------------------------------------------------- budget


def budget_threshold(r: int, m: int, N_u: int, r_minus: float) -> float:
    """Smallest admissible exponent: N_u r log(5 2^(m-3)) / log r_minus."""
    return N_u * r * math.log(5.0 * 2.0 ** (m - 3)) / math.log(r_minus)


def c_t_budget(T: float, r: int, m: int, N_u: int, beta: float, A0_len: float, i0: int,
               r_minus: float = 2.1) -> float:
    """Closed-form bound on sum_k ||u_k|| / |A_{k+1}|^r for the extremal sequence.

    With q = 5 2^(m-3), ||u_k|| <= beta r_minus^(-T k) and
    |A_{k+1}| >= q^(-(i0 + N_u (k+1))) |A_0|, the sum is bounded by
    q^(r i0 + N_u r) beta / |A_0|^r times the geometric tail x / (1 - x),
    x = q^(N_u r) / r_minus^T.
    """
    thr = budget_threshold(r, m, N_u, r_minus)
    if not T > thr:
        raise PerturbationError(f"T={T} not above threshold {thr:.6f}")
    logq = math.log(5.0 * 2.0 ** (m - 3))
    log_x = N_u * r * logq - T * math.log(r_minus)
    tail = math.exp(log_x) / -math.expm1(log_x)
    prefactor = math.exp((r * i0 + N_u * r) * logq) * beta / A0_len ** r
    return prefactor * tail


# ---------------------------------------------------------------- isometries


@dataclass(frozen=True)
class Isometry:
    """xi(x) = A (x - x_hat) + x_hat + u with A the rotation by omega."""

    u: Point
    x_hat: Point
    omega: float

    @property
    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.omega), math.sin(self.omega)
        return np.array([[c, -s], [s, c]])

    def displacement(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """xi(p) - p computed without cancellation: (A - E)(p - x_hat) + u."""
        dx = np.asarray(x, dtype=float) - self.x_hat[0]
        dy = np.asarray(y, dtype=float) - self.x_hat[1]
        cm1 = -2.0 * math.sin(self.omega / 2.0) ** 2
        s = math.sin(self.omega)
        return cm1 * dx - s * dy + self.u[0], s * dx + cm1 * dy + self.u[1]

    def __call__(self, p: Sequence[float]) -> Point:
        ddx, ddy = self.displacement(p[0], p[1])
        return float(p[0] + ddx), float(p[1] + ddy)


def rotation_term(u_k: Sequence[float], x_hat: Sequence[float], omega: float,
                  C: float | None = None) -> Isometry:
    """Build the isometry for one level, enforcing |omega| <= C ||u|| when C is given."""
    norm_u = math.hypot(u_k[0], u_k[1])
    if C is not None and abs(omega) > C * norm_u * (1 + 1e-12):
        raise PerturbationError(f"|omega|={abs(omega):.3g} exceeds C||u||={C * norm_u:.3g}")
    return Isometry((float(u_k[0]), float(u_k[1])), (float(x_hat[0]), float(x_hat[1])), float(omega))


# ---------------------------------------------------------------- composite map


@dataclass(frozen=True)
class Term:
    """One switchback: bump in the unstable coordinate times bump in the stable one."""

    along: BumpSpec
    across: BumpSpec
    xi: Isometry

    def weight(self, x, y) -> np.ndarray:
        return np.asarray(bump_eval(self.along, x)) * np.asarray(bump_eval(self.across, y))

    def contains(self, x, y) -> np.ndarray:
        lo, hi = self.along.support
        blo, bhi = self.across.support
        x = np.asarray(x)
        y = np.asarray(y)
        return (x > lo) & (x < hi) & (y > blo) & (y < bhi)


@dataclass(frozen=True)
class CompositePerturbation:
    """psi_a(x) = x + sum_{k <= a} weight_k(x) (xi_k(x) - x)."""

    terms: tuple[Term, ...]
    level: int | None = None

    def truncated(self, a: int) -> CompositePerturbation:
        return CompositePerturbation(self.terms, a)

    @property
    def active(self) -> tuple[Term, ...]:
        return self.terms if self.level is None else self.terms[: self.level]

    def displacement(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        dx = np.zeros(np.broadcast(x, y).shape)
        dy = np.zeros_like(dx)
        for t in self.active:
            w = t.weight(x, y)
            if not np.any(w):
                continue
            ex, ey = t.xi.displacement(x, y)
            dx = dx + w * ex
            dy = dy + w * ey
        return dx, dy

    def __call__(self, p: Sequence[float]) -> Point:
        return psi_eval(self, p)


def psi_eval(cp: CompositePerturbation, p: Sequence[float]) -> Point:
    """Evaluate the (possibly truncated) composite perturbation at one point."""
    dx, dy = cp.displacement(p[0], p[1])
    return float(p[0]) + float(dx), float(p[1]) + float(dy)


def supports_disjoint(terms: Sequence[Term]) -> bool:
    boxes = sorted((t.along.support, t.across.support) for t in terms)
    for (xa, ya), (xb, yb) in zip(boxes, boxes[1:]):
        if xb[0] < xa[1] and yb[0] < ya[1] and ya[0] < yb[1]:
            return False
    return True


# ---------------------------------------------------------------- perturbation series


@dataclass(frozen=True)
class PerturbationSeq:
    """Nudges u_k of size beta r_minus^(-T k) placed on windows of width |A_{k+1}|.

    Windows accumulate at the origin along the unstable coordinate; the stable
    coordinate uses a single fixed bump.  The transfer vectors t_k are the
    nudges pushed through a fixed linear transition.
    """

    T: float
    t: tuple[Point, ...]
    u: tuple[Point, ...]
    omega: tuple[float, ...]
    widths: tuple[float, ...]
    terms: tuple[Term, ...]
    N_u: int
    m: int
    r: int
    r_minus: float
    beta: float
    A0_len: float
    i0: int
    rho: float
    rot_const: float
    across: BumpSpec
    diam: float = field(default=2.0)

    @property
    def composite(self) -> CompositePerturbation:
        return CompositePerturbation(self.terms)

    def budget(self) -> float:
        return c_t_budget(self.T, self.r, self.m, self.N_u, self.beta, self.A0_len, self.i0,
                          self.r_minus)

    def weighted_sizes(self) -> np.ndarray:
        """||u_k|| / |A_{k+1}|^r per level."""
        return np.array([math.hypot(*uk) / w ** self.r for uk, w in zip(self.u, self.widths)])

    def leibniz_constant(self) -> float:
        """C_0 with ||term_k||_r <= C_0 ||S_[-1,1]||_r ||u_k|| / |A_{k+1}|^r.

        From the product rule applied twice: 2^r for the along/across product,
        2^r for the bump times the isometry displacement, the across-bump norm,
        the rescaling (2/width)^r of the along bump, and
        1 + C (diam + 1) for the rotation part of the displacement.
        """
        r = self.r
        return (4.0 ** r) * (2.0 ** r) * bump_cr_norm(self.across, r) * (1.0 + self.rot_const * (self.diam + 1.0))


def perturbation_sequence(T: float, levels: int = 6, r: int = 3, m: int = 3, N_u: int = 2,
                          r_minus: float = 2.1, beta: float = 1.0, A0_len: float = 1.0,
                          i0: int = 0, rho: float = 0.5, rot_const: float = 0.5,
                          direction: float = 0.3, transfer: Sequence[Sequence[float]] | None = None
                          ) -> PerturbationSeq:
    """Extremal perturbation series for exponent T.

    Level k uses the window [3 w_k, 4 w_k] x [-1/2, 1/2] with
    w_k = |A_0| q^(-(i0 + N_u (k+1))), nudge u_k = beta r_minus^(-T k) along a
    fixed direction, and rotation omega_k = rot_const ||u_k||.
    """
    q = 5.0 * 2.0 ** (m - 3)
    across = BumpSpec(0.2, -0.5, 0.5)
    M = np.eye(2) if transfer is None else np.asarray(transfer, dtype=float)
    c, s = math.cos(direction), math.sin(direction)
    us, ts, oms, ws, terms = [], [], [], [], []
    for k in range(1, levels + 1):
        w = A0_len * q ** (-(i0 + N_u * (k + 1)))
        size = beta * r_minus ** (-T * k)
        uk = (size * c, size * s)
        om = rot_const * size
        xh = (3.5 * w, 0.0)
        xi = rotation_term(uk, xh, om, C=rot_const)
        terms.append(Term(BumpSpec(rho, 3.0 * w, 4.0 * w), across, xi))
        tk = M @ np.array(uk)
        us.append(uk)
        ts.append((float(tk[0]), float(tk[1])))
        oms.append(om)
        ws.append(w)
    if not supports_disjoint(terms):
        raise PerturbationError("level supports overlap; increase the contraction q^N_u")
    return PerturbationSeq(T, tuple(ts), tuple(us), tuple(oms), tuple(ws), tuple(terms), N_u, m, r,
                           r_minus, beta, A0_len, i0, rho, rot_const, across)


# ---------------------------------------------------------------- C^r norms of displacements


def _mixed_derivative(g: Callable[[np.ndarray, np.ndarray], np.ndarray], x: np.ndarray, y: np.ndarray,
                      i: int, j: int, hx: float, hy: float) -> np.ndarray:
    """d^i/dx^i d^j/dy^j of g by tensor central differences with one Richardson step."""
    ox, wx = _binom_stencil(i)
    oy, wy = _binom_stencil(j)

    def central(sx: float, sy: float) -> np.ndarray:
        acc = 0.0
        for a, wa in zip(ox, wx):
            for b, wb in zip(oy, wy):
                acc = acc + wa * wb * g(x + a * sx, y + b * sy)
        return acc / (sx ** i * sy ** j)

    return (4.0 * central(hx / 2, hy / 2) - central(hx, hy)) / 3.0


def _term_grid(term: Term, samples: int) -> tuple[np.ndarray, np.ndarray]:
    a, b = term.along.a, term.along.b
    w = term.along.ramp
    xs = np.concatenate([np.linspace(a - w, a, samples), np.linspace(b, b + w, samples),
                         [0.5 * (a + b)]])
    c, d = term.across.a, term.across.b
    v = term.across.ramp
    ys = np.concatenate([np.linspace(c - v, c, samples // 2), np.linspace(d, d + v, samples // 2),
                         np.linspace(c, d, 5)])
    return np.meshgrid(xs, ys, indexing="ij")


def displacement_cr_norm(cp: CompositePerturbation, r: int, samples: int = 41,
                         restrict: Sequence[int] | None = None) -> float:
    """Sampled C^r norm of psi - id: max over |alpha| <= r and both components.

    The grid is refined around every term's ramps; supports are disjoint, so the
    norm is the largest per-support value.
    """
    if not 0 <= r <= MAX_ORDER:
        raise PerturbationError(f"order r={r} outside 0..{MAX_ORDER}")
    idx = range(len(cp.active)) if restrict is None else restrict
    best = 0.0
    for k in idx:
        term = cp.active[k]
        X, Y = _term_grid(term, samples)
        hx = term.along.ramp / 64
        hy = term.across.ramp / 64
        for comp in (0, 1):
            g = lambda x, y, c=comp: cp.displacement(x, y)[c]  # noqa: E731
            for order in range(r + 1):
                for i in range(order + 1):
                    j = order - i
                    val = _mixed_derivative(g, X, Y, i, j, hx, hy)
                    best = max(best, float(np.max(np.abs(val))))
    return best


def cauchy_tail_check(seq: PerturbationSeq, a: int, b: int, samples: int = 41) -> tuple[float, float]:
    """Return (measured ||psi_b - psi_a||_r, bound C_0 ||S_[-1,1]||_r sum_{a<k<=b} ||u_k||/|A|^r)."""
    if not 0 <= a < b <= len(seq.terms):
        raise PerturbationError("need 0 <= a < b <= number of levels")
    diff = CompositePerturbation(seq.terms[a:b])
    measured = displacement_cr_norm(diff, seq.r, samples)
    unit = bump_cr_norm(BumpSpec(seq.rho, -1.0, 1.0), seq.r)
    bound = seq.leibniz_constant() * unit * float(np.sum(seq.weighted_sizes()[a:b]))
    return measured, bound


def injective_on_grid(cp: CompositePerturbation, box: Sequence[float], n: int = 60,
                      tol: float = 0.0) -> bool:
    """Images of a uniform grid in box are pairwise distinct (a diffeomorphism proxy)."""
    x0, x1, y0, y1 = box
    X, Y = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n), indexing="ij")
    dx, dy = cp.displacement(X, Y)
    pts = np.stack([(X + dx).ravel(), (Y + dy).ravel()], axis=1)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    srt = pts[order]
    gaps = np.hypot(*(srt[1:] - srt[:-1]).T)
    return bool(np.all(gaps > tol))
