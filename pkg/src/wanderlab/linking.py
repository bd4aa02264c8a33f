"""Linked pairs of bridges on a line, the shift perturbation, the linking search,
the linear-growth construction and critical-chain itineraries.

Positions are carried in a private high-precision mpmath context: bridge widths
shrink by roughly a factor tau per level, so double precision runs out after two
or three levels of the growth construction.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import mpmath

from .cantor.core import Bridge

MP = mpmath.MPContext()
MP.dps = 220


def mpf(x) -> mpmath.mpf:
    return MP.mpf(x)


class PreconditionError(ValueError):
    """A documented precondition does not hold; `clause` names the failing part."""

    def __init__(self, clause: str, message: str) -> None:
        super().__init__(f"{clause}: {message}")
        self.clause = clause


class LinkingError(ArithmeticError):
    """The search ran out of candidates; `best` holds the closest partial result."""

    def __init__(self, message: str, best: object = None) -> None:
        super().__init__(message)
        self.best = best


# ---------------------------------------------------------------- line Cantor sets


@dataclass(frozen=True)
class LineCantor:
    """A self-similar Cantor set on a line with explicit bridge combinatorics.

    kind 's': two affine branches with ratios (c1, c2); letters 1 (left), 2 (right).
    kind 'u': the u-set of x -> x^2 - 2 in tent coordinates, letters z = 1..m-1.
    Child z of a u-bridge has relative length 2^-z; the child z = 1 holds the
    leading point and its neighbour z = 2 bounds the leading (largest) gap.
    """

    kind: str
    lo: float
    hi: float
    ratios: tuple[float, float] = (0.4, 0.4)
    m: int = 0

    def __post_init__(self) -> None:
        if self.kind == "s":
            c1, c2 = self.ratios
            if not (c1 > 0 and c2 > 0 and c1 + c2 < 1):
                raise ValueError("affine ratios must be positive with c1 + c2 < 1")
        elif self.kind == "u":
            if self.m < 3:
                raise ValueError("tent u-set needs m >= 3")
        else:
            raise ValueError("kind must be 's' or 'u'")
        if not self.lo < self.hi:
            raise ValueError("degenerate base interval")

    @property
    def thickness(self) -> float:
        if self.kind == "s":
            c1, c2 = self.ratios
            return min(c1, c2) / (1.0 - c1 - c2)
        return float(2 ** (self.m - 2) - 1)

    def root(self) -> Bridge:
        return Bridge(self.kind, 0, (), mpf(self.lo), mpf(self.hi))

    def orientation(self, b: Bridge) -> int:
        """+1 when the leading point of a u-bridge is its right end."""
        return 1 if b.generation % 2 == 0 else -1

    def children(self, b: Bridge) -> list[Bridge]:
        w = b.hi - b.lo
        g = b.generation + 1
        if self.kind == "s":
            c1, c2 = mpf(self.ratios[0]), mpf(self.ratios[1])
            return [Bridge("s", g, b.itinerary + (1,), b.lo, b.lo + c1 * w),
                    Bridge("s", g, b.itinerary + (2,), b.hi - c2 * w, b.hi)]
        d = mpf(1) / (2 ** self.m - 1)
        scale = w / (1 - 3 * d)
        o = self.orientation(b)
        out = []
        for z in range(1, self.m):
            s0 = (1 + d) / mpf(2) ** z - 2 * d
            s1 = 2 * (1 - d) / mpf(2) ** z - 2 * d
            if o > 0:
                lo, hi = b.lo + s0 * scale, b.lo + s1 * scale
            else:
                lo, hi = b.hi - s1 * scale, b.hi - s0 * scale
            out.append(Bridge("u", g, b.itinerary + (z,), lo, hi))
        out.sort(key=lambda c: c.lo)
        return out

    def leading_child(self, b: Bridge) -> Bridge:
        if self.kind != "u":
            raise ValueError("leading children are defined for u-bridges")
        return next(c for c in self.children(b) if c.itinerary[-1] == 1)

    def leading_pair(self, b: Bridge) -> tuple[Bridge, Bridge]:
        """The two children bounding the leading gap, left one first."""
        kids = self.children(b)
        if self.kind == "s":
            return kids[0], kids[1]
        pair = sorted((c for c in kids if c.itinerary[-1] in (1, 2)), key=lambda c: c.lo)
        return pair[0], pair[1]

    def bridge(self, itinerary: Sequence[int]) -> Bridge:
        b = self.root()
        for z in itinerary:
            b = next(c for c in self.children(b) if c.itinerary[-1] == z)
        return b


def affine_line_set(c: float = 0.4, lo: float = 0.0, hi: float = 1.0) -> LineCantor:
    return LineCantor("s", lo, hi, (c, c))


def tent_line_set(m: int = 16, lo: float = 0.0, hi: float = 1.0) -> LineCantor:
    return LineCantor("u", lo, hi, m=m)


# ---------------------------------------------------------------- shifted pairs


@dataclass(frozen=True)
class ShiftedPair:
    """s-set and u-set on one line; the s-side is moved by the shift.

    A shift nu sends x to ref + (1 + C nu)(x - ref) + nu + D nu^2: a literal
    translation when C = D = 0, and otherwise a stress injection of the
    (1 +- C|nu|) / O(nu^2) distortion regime.
    """

    Ks: LineCantor
    Ku: LineCantor
    shift: float = 0.0
    C: float = 0.0
    D: float = 0.0
    radius: float = 100.0
    r_minus: float = 2.1
    r_plus: float = 2.75
    eps_ratio: float = 0.01

    def __post_init__(self) -> None:
        if abs(self.shift) > self.radius:
            raise PreconditionError("radius", f"|shift| = {abs(float(self.shift))} exceeds {self.radius}")
        if self.Ks.kind != "s" or self.Ku.kind != "u":
            raise ValueError("Ks must be an s-set and Ku a u-set")

    @property
    def tau(self) -> float:
        return self.Ku.thickness

    @property
    def tau_s(self) -> float:
        return self.Ks.thickness

    def at(self, nu) -> "ShiftedPair":
        return replace(self, shift=mpf(self.shift) + mpf(nu))

    def _map(self, x, nu):
        t = mpf(self.shift) + mpf(nu)
        ref = (mpf(self.Ks.lo) + mpf(self.Ks.hi)) / 2
        return ref + (1 + mpf(self.C) * t) * (x - ref) + t + mpf(self.D) * t * t

    def moved(self, b: Bridge, nu=0) -> Bridge:
        return Bridge(b.kind, b.generation, b.itinerary, self._map(b.lo, nu), self._map(b.hi, nu))

    def moved_children(self, b: Bridge, nu=0) -> list[Bridge]:
        return [self.moved(c, nu) for c in self.Ks.children(b)]


def xi0(r_plus: float, r_minus: float, tau: float, tau_s: float | None = None,
        check: bool = True) -> float:
    """Linking constant (1/r_plus - 1/(2 sqrt(tau))) r_minus.

    With check=True the thickness condition tau > max(r_plus^2, 1/tau_s, 3^8) is
    enforced clause by clause.
    """
    if check:
        if not tau > r_plus ** 2:
            raise PreconditionError("r_plus^2", f"tau = {tau} is not > r_plus^2 = {r_plus ** 2}")
        if tau_s is not None and not tau > 1.0 / tau_s:
            raise PreconditionError("1/tau_s", f"tau = {tau} is not > 1/tau_s = {1.0 / tau_s}")
        if not tau > 3 ** 8:
            raise PreconditionError("3^8", f"tau = {tau} is not > 3^8")
    val = (1.0 / r_plus - 1.0 / (2.0 * math.sqrt(tau))) * r_minus
    if check and not 0.0 < val < 1.0:
        raise PreconditionError("range", f"xi0 = {val} outside (0, 1)")
    return val


# ---------------------------------------------------------------- classification


@dataclass(frozen=True)
class LinkedPairReport:
    bs: Bridge
    au: Bridge
    linked: bool
    xi_linked: bool
    xi: float
    proportional: bool
    gamma: float
    u_dominating: bool
    overlap: float


def _overlap(a: Bridge, b: Bridge):
    return max(mpf(0), min(a.hi, b.hi) - max(a.lo, b.lo))


def _in_gap(J: Bridge, host: Bridge, children, depth: int) -> bool:
    """True if J sits inside one gap of host's depth-`depth` cover."""
    if J.lo < host.lo or J.hi > host.hi:
        return False
    cur = host
    for _ in range(depth):
        kids = children(cur)
        hit = [c for c in kids if c.hi > J.lo and c.lo < J.hi]
        touching = [c for c in kids if c.hi >= J.lo and c.lo <= J.hi]
        if not touching:
            return True
        if len(hit) != 1 or len(touching) > 1:
            return False
        cur = hit[0]
        if J.lo < cur.lo or J.hi > cur.hi:
            return False
    return False


def classify_pair(pair: ShiftedPair, Bs: Bridge, Au: Bridge, xi: float = 0.5,
                  gamma: float = 0.5, depth: int = 12, nu=0) -> LinkedPairReport:
    """Linked / xi-linked / gamma-proportional / u-dominating flags at shift `nu`.

    `Bs` is given in unshifted position. Gap containment is checked against
    depth-`depth` covers below each bridge.
    """
    B = pair.moved(Bs, nu)
    ov = _overlap(B, Au)
    not_in_gaps = (not _in_gap(B, Au, pair.Ku.children, depth)
                   and not _in_gap(Au, B, lambda b: pair.moved_children(_unmove(pair, b, Bs, nu), nu), depth))
    linked = bool(ov > 0 and not_in_gaps)
    lb, la = B.hi - B.lo, Au.hi - Au.lo
    xi_linked = bool(linked and ov >= mpf(xi) * min(lb, la))
    prop = bool(la >= lb >= mpf(gamma) * la)
    return LinkedPairReport(B, Au, linked, xi_linked, float(xi), prop, float(gamma),
                            bool(la >= lb), float(ov))


def _unmove(pair: ShiftedPair, moved: Bridge, ref: Bridge, nu) -> Bridge:
    # moved s-bridges keep their itinerary; rebuild the unshifted one from the root of ref
    b = ref
    for z in moved.itinerary[ref.generation:]:
        b = pair.Ks.children(b)[z - 1]
    return b


# ---------------------------------------------------------------- linking search


@dataclass(frozen=True)
class WindowSelection:
    Bhat: Bridge
    Ahat: Bridge
    J1: tuple
    a0: object
    arc: tuple


@dataclass(frozen=True)
class LinkingResult:
    delta: object
    B1: Bridge
    B1t: Bridge
    A1: Bridge
    A1t: Bridge
    Gs: tuple
    Gu: tuple
    selection: WindowSelection
    eps: object
    alignment: object
    checks: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return all(self.checks.values())


def _common_point(pair: ShiftedPair, Bs: Bridge, Au: Bridge, target, nu=0,
                  max_nodes: int = 200_000):
    """Descend linked pairs of children to width below `target`; returns the chains.

    One child of the longer bridge stays linked with the other bridge when the
    thickness product exceeds one, so the depth-first search rarely backtracks.
    """
    nodes = 0

    def weakly_linked(bs: Bridge, au: Bridge) -> bool:
        B = pair.moved(bs, nu)
        if _overlap(B, au) <= 0:
            return False
        return not _in_gap(B, au, pair.Ku.children, 1) and not _in_gap(
            au, B, lambda b: pair.moved_children(bs, nu), 1)

    def go(sc: list[Bridge], uc: list[Bridge]):
        nonlocal nodes
        nodes += 1
        if nodes > max_nodes:
            raise LinkingError("common point search exhausted")
        bs, au = sc[-1], uc[-1]
        lb = pair.moved(bs, nu)
        if lb.hi - lb.lo < target and au.hi - au.lo < target:
            return sc, uc
        if lb.hi - lb.lo >= au.hi - au.lo:
            kids = sorted(pair.Ks.children(bs), key=lambda c: -_overlap(pair.moved(c, nu), au))
            for c in kids:
                if weakly_linked(c, au):
                    r = go(sc + [c], uc)
                    if r is not None:
                        return r
        else:
            kids = sorted(pair.Ku.children(au), key=lambda c: -_overlap(lb, c))
            for c in kids:
                if weakly_linked(bs, c):
                    r = go(sc, uc + [c])
                    if r is not None:
                        return r
        return None

    res = go([Bs], [Au])
    if res is None:
        raise LinkingError("no common point: pair not linked at any depth")
    sc, uc = res
    B = pair.moved(sc[-1], nu)
    a0 = (max(B.lo, uc[-1].lo) + min(B.hi, uc[-1].hi)) / 2
    return sc, uc, a0


def _solve(f, lo, hi, tol, samples: int = 256):
    """Coarse scan for a sign change of f on [lo, hi], then bisection."""
    lo, hi = mpf(lo), mpf(hi)
    xs = [lo + (hi - lo) * i / samples for i in range(samples + 1)]
    vals = [f(x) for x in xs]
    for i in range(samples):
        if vals[i] == 0:
            return xs[i]
        if vals[i] * vals[i + 1] < 0:
            a, b, fa = xs[i], xs[i + 1], vals[i]
            while b - a > tol:
                c = (a + b) / 2
                fc = f(c)
                if fc == 0:
                    return c
                if (fc < 0) == (fa < 0):
                    a, fa = c, fc
                else:
                    b = c
            return (a + b) / 2
    if vals[-1] == 0:
        return xs[-1]
    return None


def size_window_select(pair: ShiftedPair, B0s: Bridge, A0u: Bridge, eps) -> WindowSelection:
    """Sub-bridges with the width windows of the linking construction and the shift
    interval J1 on which they meet."""
    eps = mpf(eps)
    tau = mpf(pair.tau)
    ov = _overlap(pair.moved(B0s), A0u)
    if not eps > 0:
        raise PreconditionError("eps", "eps must be positive")
    if eps > ov:
        raise PreconditionError("overlap", f"eps exceeds the overlap {float(ov)}")
    if eps > mpf(pair.eps_ratio) * pair.radius:
        raise PreconditionError("radius", "eps is not small against the validity radius")
    hi_w, lo_w = tau ** (-0.75) * eps, tau ** (-1.25) * eps
    sc, uc, a0 = _common_point(pair, B0s, A0u, lo_w / (10 * mpf(pair.r_plus)))

    # scale factor of s-lengths over |nu| <= eps (monotone in nu)
    def s_len(b: Bridge, nu) -> object:
        m = pair.moved(b, nu)
        return m.hi - m.lo

    def within(b: Bridge, lo, hi) -> bool:
        return all(lo <= s_len(b, nu) < hi for nu in (-eps, 0, eps))

    Bhat = next((b for b in sc if s_len(b, 0) < hi_w), None)
    if Bhat is None or not within(Bhat, lo_w, hi_w):
        raise LinkingError("width window for the s-bridge is empty at available depth", Bhat)

    # arc of width eps/3 in A0u with a0 as an endpoint
    third = eps / 3
    arc = (a0, a0 + third) if a0 + third <= A0u.hi else (a0 - third, a0)
    lo_a, hi_a = third / tau ** 0.25, third
    cands: list[Bridge] = []

    def scan(A: Bridge) -> None:
        if A.hi <= arc[0] or A.lo >= arc[1] or A.hi - A.lo < lo_a:
            return
        if A.hi - A.lo <= hi_a and arc[0] <= A.lo and A.hi <= arc[1]:
            cands.append(A)
            return
        for c in pair.Ku.children(A):
            scan(c)

    scan(A0u)
    if not cands:
        raise LinkingError("no u-bridge of the intermediate width inside the arc")
    A0 = min(cands, key=lambda A: (max(A.lo - a0, a0 - A.hi, mpf(0)), A.lo))
    bl = s_len(Bhat, 0)
    Ahat = A0
    while True:
        nxt = pair.Ku.leading_child(Ahat)
        if nxt.hi - nxt.lo <= tau ** 0.25 * bl:
            break
        Ahat = nxt
    la = Ahat.hi - Ahat.lo
    for nu in (-eps, 0, eps):
        b = s_len(Bhat, nu)
        if not (la / tau ** 0.5 <= b < la / tau ** 0.25):
            raise LinkingError("proportion window for the u-bridge fails", (Bhat, Ahat))

    # J1 endpoints: the shifts where Bhat(nu) first and last touches Ahat
    tol = bl * mpf(10) ** (-60)
    left = _solve(lambda nu: pair.moved(Bhat, nu).hi - Ahat.lo, -eps, eps, tol)
    right = _solve(lambda nu: pair.moved(Bhat, nu).lo - Ahat.hi, -eps, eps, tol)
    if left is None or right is None:
        raise LinkingError("meeting interval J1 is not inside (-eps, eps)", (Bhat, Ahat))
    return WindowSelection(Bhat, Ahat, (left, right), a0, arc)


def linking_search(pair: ShiftedPair, B0s: Bridge, A0u: Bridge, eps, depth: int = 12,
                   rel_tol: float = 1e-40) -> LinkingResult:
    """Shift aligning the middle points of an s-gap and a u-gap inside a linked pair.

    Returns the shift delta (relative to pair.shift), the four sub-bridges (B1, B1t
    left/right of the s-gap; A1, A1t left/right of the leading u-gap) and the gaps.
    All post-conditions are re-validated into `checks`.
    """
    rep = classify_pair(pair, B0s, A0u, depth=depth)
    if not rep.linked:
        raise PreconditionError("linked", "the starting pair is not linked")
    eps = mpf(eps)
    sel = size_window_select(pair, B0s, A0u, eps)
    B1, B1t = pair.Ks.leading_pair(sel.Bhat)
    A1, A1t = pair.Ku.leading_pair(sel.Ahat)
    Gu = (A1.hi, A1t.lo)
    mu = (Gu[0] + Gu[1]) / 2

    def diff(nu):
        return (pair.moved(B1, nu).hi + pair.moved(B1t, nu).lo) / 2 - mu

    glen = Gu[1] - Gu[0]
    J = sel.J1
    delta = _solve(diff, J[0], J[1], glen * mpf(rel_tol))
    if delta is None:
        raise LinkingError("midpoint difference has no sign change on J1", sel)
    Gs = (pair.moved(B1, delta).hi, pair.moved(B1t, delta).lo)
    align = abs(diff(delta)) / glen
    tau = mpf(pair.tau)
    xi = xi0(pair.r_plus, pair.r_minus, pair.tau, check=False)
    checks: dict[str, bool] = {"shift_small": bool(abs(delta) < eps), "aligned": bool(align <= 1e-9)}
    lo_w = tau ** (-1.25) * eps / mpf(pair.r_plus)
    hi_w = tau ** (-0.75) * eps / mpf(pair.r_minus)
    for nu in (-eps, 0, delta, eps):
        for b in (B1, B1t):
            m = pair.moved(b, nu)
            checks[f"width_{b.itinerary[-1]}_{_tag(nu, eps)}"] = bool(lo_w <= m.hi - m.lo < hi_w)
        bh = pair.moved(sel.Bhat, nu)
        checks[f"gap_ratio_{_tag(nu, eps)}"] = bool(glen / (bh.hi - bh.lo) <= tau ** (-0.5))
    for name, (b, a) in {"left": (B1, A1), "right": (B1t, A1t)}.items():
        for nu in (-eps, delta, eps):
            r = classify_pair(pair, b, a, xi=xi, gamma=1 / pair.tau, depth=depth, nu=nu)
            checks[f"proportional_{name}_{_tag(nu, eps)}"] = r.proportional
        r = classify_pair(pair, b, a, xi=xi, gamma=1 / pair.tau, depth=depth, nu=delta)
        checks[f"xi0_linked_{name}"] = r.xi_linked
        checks[f"u_dominating_{name}"] = r.u_dominating
    return LinkingResult(delta, B1, B1t, A1, A1t, Gs, Gu, sel, eps, align, checks)


def _tag(nu, eps) -> str:
    if nu == -eps:
        return "minus_eps"
    if nu == eps:
        return "plus_eps"
    return "zero" if nu == 0 else "delta"


# ---------------------------------------------------------------- linear growth


@dataclass(frozen=True)
class GrowthLevel:
    k: int
    delta: object
    Delta: object
    eps: object
    Bs: Bridge
    Bs_t: Bridge
    Au: Bridge
    Au_t: Bridge
    Gs: tuple
    Gu: tuple
    n: int
    i: int


@dataclass(frozen=True)
class GrowthSequence:
    levels: tuple[GrowthLevel, ...]
    xi0: float
    a: float
    alpha0: float
    N_s: int
    N_u: int
    eps: object
    failure: str | None
    checks: dict

    @property
    def Delta(self):
        return self.levels[-1].Delta if self.levels else mpf(0)

    def xi_ladder(self, r_minus: float) -> list[float]:
        return xi_ladder(self.xi0, [lv.n for lv in self.levels], r_minus)

    def to_json(self) -> str:
        def iv(b: Bridge) -> list[str]:
            return [MP.nstr(b.lo, 40), MP.nstr(b.hi, 40)]

        data = {
            "xi0": self.xi0, "a": self.a, "alpha0": self.alpha0, "N_s": self.N_s, "N_u": self.N_u,
            "eps": MP.nstr(mpf(self.eps), 20), "failure": self.failure, "checks": self.checks,
            "levels": [{
                "k": lv.k, "delta": MP.nstr(lv.delta, 30), "Delta": MP.nstr(lv.Delta, 30),
                "eps": MP.nstr(lv.eps, 20), "n": lv.n, "i": lv.i,
                "Bs": iv(lv.Bs), "Bs_t": iv(lv.Bs_t), "Au": iv(lv.Au), "Au_t": iv(lv.Au_t),
                "Gs": [MP.nstr(g, 40) for g in lv.Gs], "Gu": [MP.nstr(g, 40) for g in lv.Gu],
            } for lv in self.levels],
        }
        return json.dumps(data, indent=2)


def xi_ladder(xi_0: float, gens: Sequence[int], r_minus: float) -> list[float]:
    """xi_k = xi0 (1 - 1/2 sum_{i<=k} r_minus^-ntilde_i), ntilde_i = min_l (n_{i+l} - n_l), n_0 = 0."""
    n = [0] + list(gens)
    K = len(gens)
    out = [xi_0]
    acc = 0.0
    for i in range(1, K + 1):
        nt = min(n[i + l] - n[l] for l in range(0, K - i + 1))
        acc += r_minus ** (-nt)
        out.append(xi_0 * (1.0 - 0.5 * acc))
    return out


def growth_constants(pair: ShiftedPair, eps: float) -> dict[str, float]:
    tau, rm, rp, m = pair.tau, pair.r_minus, pair.r_plus, pair.Ku.m
    x0 = xi0(rp, rm, tau, pair.tau_s)
    a = max(2.0, 4 * x0 * (1 + pair.C * eps) / (rp * (1 - 1 / rm) * (1 - 2 / rm)))
    alpha0 = max((1 - 2 / rm) / (8 * tau), 2.0 ** -(m + 3))
    N_s = math.floor(math.log(0.5 * rp ** -2 * tau ** -1.25 * x0) / math.log(1 / rm))
    N_u = math.floor(math.log(0.5 * rp ** -2 * tau ** -2.25 * x0) / math.log(2 / 3))
    return {"xi0": x0, "a": a, "alpha0": alpha0, "N_s": N_s, "N_u": N_u}


def linear_growth(pair: ShiftedPair, B0s: Bridge, A0u: Bridge, eps, K: int = 8,
                  depth: int = 12) -> GrowthSequence:
    """K levels of nested linked pairs with summable shifts.

    Level 1 links inside (B0s, A0u) with radius xi0 tau^-3/4 eps / (2 r_minus) so
    that the first shift already obeys the per-level bound; level k+1 links inside
    (B1t_k, A1t_k) at the accumulated shift with radius xi0 |B1t_k| / (2 a r_plus).
    """
    eps = mpf(eps)
    cst = growth_constants(pair, float(eps))
    x0, a = cst["xi0"], cst["a"]
    tau, rm, rp = pair.tau, pair.r_minus, pair.r_plus
    levels: list[GrowthLevel] = []
    failure = None
    Delta = mpf(pair.shift)
    bs, au = B0s, A0u
    radius = mpf(x0) * mpf(tau) ** -0.75 * eps / (2 * mpf(rm))
    for k in range(1, K + 1):
        cur = pair.at(Delta - mpf(pair.shift)) if k > 1 else pair
        try:
            res = linking_search(cur, bs, au, radius, depth=depth)
        except (LinkingError, PreconditionError) as exc:
            failure = f"level {k}: {exc}"
            break
        if not res.valid:
            bad = [n for n, ok in res.checks.items() if not ok]
            failure = f"level {k}: post-conditions failed {bad}"
            break
        Delta = Delta + res.delta
        levels.append(GrowthLevel(k, res.delta, Delta, radius, res.B1, res.B1t, res.A1, res.A1t,
                                  res.Gs, res.Gu, res.B1t.generation, res.A1t.generation))
        bs, au = res.B1t, res.A1t
        moved = cur.at(res.delta).moved(bs)
        radius = mpf(x0) * (moved.hi - moved.lo) / (2 * mpf(a) * mpf(rp))
    seq = GrowthSequence(tuple(levels), x0, a, cst["alpha0"], cst["N_s"], cst["N_u"], eps, failure, {})
    return replace(seq, checks=growth_checks(pair, seq, depth) if levels else {})


def growth_checks(pair: ShiftedPair, seq: GrowthSequence, depth: int = 12) -> dict[str, bool]:
    rm, tau = pair.r_minus, mpf(pair.tau)
    eps = mpf(seq.eps)
    out: dict[str, bool] = {}
    bound = mpf(seq.xi0) * tau ** -0.75 * eps / 2
    out["delta_bounds"] = all(abs(lv.delta) <= bound * mpf(rm) ** (-lv.k) for lv in seq.levels)
    out["delta_sum"] = bool(sum(abs(lv.delta) for lv in seq.levels) < eps * tau ** -0.75 / 2)
    final = pair.at(seq.Delta - mpf(pair.shift))
    ladder = seq.xi_ladder(rm)
    K = len(seq.levels)
    ok_ladder, ok_half, ok_dom = True, True, True
    for lv in seq.levels:
        xi_t = ladder[K - lv.k]
        for b, a in ((lv.Bs, lv.Au), (lv.Bs_t, lv.Au_t)):
            r = classify_pair(final, b, a, xi=xi_t, gamma=0.5, depth=depth)
            ok_ladder &= r.xi_linked
            ok_dom &= r.u_dominating
            ok_half &= classify_pair(final, b, a, xi=seq.xi0 / 2, depth=depth).xi_linked
    out["xi_ladder_linked"] = ok_ladder
    out["half_xi0_linked"] = ok_half
    out["u_dominating"] = ok_dom
    out["ladder_above_half"] = all(x >= seq.xi0 / 2 for x in ladder)
    gens_ok = True
    prev_n, prev_i = seq.levels[0].n, seq.levels[0].i
    for lv in seq.levels[1:]:
        gens_ok &= prev_n < lv.n <= prev_n + seq.N_s and prev_i < lv.i <= prev_i + seq.N_u
        prev_n, prev_i = lv.n, lv.i
    out["generation_steps"] = bool(gens_ok)
    out["alpha0_disjoint"] = alpha_neighbourhoods_disjoint(final, seq)
    return out


def alpha_neighbourhoods_disjoint(final: ShiftedPair, seq: GrowthSequence) -> bool:
    """Pairwise disjointness of the alpha0 |A_k|-neighbourhoods of I_k = A_k u B_k."""
    hoods = []
    for lv in seq.levels:
        b = final.moved(lv.Bs)
        r = mpf(seq.alpha0) * (lv.Au.hi - lv.Au.lo)
        hoods.append((min(b.lo, lv.Au.lo) - r, max(b.hi, lv.Au.hi) + r))
    for i in range(len(hoods)):
        for j in range(i + 1, len(hoods)):
            if hoods[i][1] >= hoods[j][0] and hoods[j][1] >= hoods[i][0]:
                return False
    return True


def standard_pair(m: int = 16, c: float = 0.4, **kwargs) -> tuple[ShiftedPair, Bridge, Bridge]:
    """The tent u-set of x^2 - 2 on [0, 1] against an affine s-set on [0.3, 1.3]."""
    Ku = tent_line_set(m, 0.0, 1.0)
    Ks = affine_line_set(c, 0.3, 1.3)
    pair = ShiftedPair(Ks, Ku, **kwargs)
    return pair, Ks.root(), Ku.root()


# ---------------------------------------------------------------- critical chains


@dataclass(frozen=True)
class CriticalChain:
    u_itinerary: str
    s_itinerary: str
    bracket: int  # <k> = n_hat + k^2 + k

    @property
    def length(self) -> int:
        return len(self.u_itinerary)


def critical_chain(k: int, z_k: int, n_hat: int, v: str, w_hat: str) -> CriticalChain:
    """u itinerary 1^(z_k k^2) 2^(k^2) v reverse(w_hat) and its reversal.

    w_hat is the itinerary of an s-bridge of generation n_hat, so its length must be n_hat.
    """
    if k < 1 or z_k < 1:
        raise ValueError("k and z_k must be positive")
    if len(v) != k:
        raise ValueError(f"length mismatch: |v| = {len(v)} but k = {k}")
    if len(w_hat) != n_hat:
        raise ValueError(f"length mismatch: |w_hat| = {len(w_hat)} but n_hat = {n_hat}")
    if set(v + w_hat) - {"1", "2"}:
        raise ValueError("itineraries are words over {1, 2}")
    u = "1" * (z_k * k * k) + "2" * (k * k) + v + w_hat[::-1]
    s = w_hat + v[::-1] + "2" * (k * k) + "1" * (z_k * k * k)
    bracket = n_hat + k * k + k
    if len(u) != z_k * k * k + bracket:
        raise ValueError("length mismatch")
    return CriticalChain(u, s, bracket)


@dataclass(frozen=True)
class ChainGenerations:
    k: tuple[int, ...]
    n_hat: tuple[int, ...]
    i_hat: tuple[int, ...]
    C1: float
    C2: float
    C1_fit: float
    C2_fit: float


def chain_generations(K: int = 50, T: float | None = None, m: int = 16, tau: float | None = None,
                      r_minus: float = 2.1, r_plus: float = 2.75, r_s: float = 2.5,
                      B0: float = 1.0, A0: float = 1.0, xi_0: float | None = None,
                      N_period: int = 2, N_s: int | None = None) -> ChainGenerations:
    """Generations n_hat_k (s-side) and i_hat_k (u-side) of the critical-chain selection.

    At level k the selection works at scale eps0 r_minus^(-T k): n_hat_k is the first
    generation of an s-bridge of ratio r_s below tau^-3/4 times that scale, i_k the
    generation of the leading-child chain u-bridge (ratio 1/2) just above tau^1/4 |B_hat|,
    and i_hat_k = (m - 1) i_k N_period is the return time bound through the period.
    Also returns the explicit envelope constants and a fitted envelope C1 T k + C2.
    """
    tau = float(2 ** (m - 2) - 1) if tau is None else tau
    x0 = xi0(r_plus, r_minus, tau) if xi_0 is None else xi_0
    eps0 = x0 * B0 / 2
    if N_s is None:
        N_s = math.floor(math.log(0.5 * r_plus ** -2 * tau ** -1.25 * x0) / math.log(1 / r_minus))
    T0 = N_s * math.log(r_plus) / math.log(r_minus)
    T = math.ceil(T0) if T is None else T
    ks, nh, ih = [], [], []
    for k in range(1, K + 2):
        # logs throughout: the scales underflow doubles for k of a few dozen
        log_scale = math.log(eps0) - T * k * math.log(r_minus)
        # first generation with B0 r_s^-n < tau^-3/4 scale
        n = math.floor((math.log(B0) + 0.75 * math.log(tau) - log_scale) / math.log(r_s)) + 1
        log_bhat = math.log(B0) - n * math.log(r_s)
        i = max(0, math.ceil((math.log(A0) - 0.5 * math.log(tau) - log_bhat) / math.log(2.0)))
        ks.append(k)
        nh.append(n)
        ih.append((m - 1) * i * N_period)
    C3 = math.log(tau / eps0 * A0) + math.log(tau ** 1.25 / eps0 * B0) * math.log(r_plus / r_minus) / math.log(r_minus)
    c_i1 = N_period * (m - 1) * math.log(r_plus) / math.log(1.5)
    c_i2 = C3 * N_period * (m - 1) / math.log(1.5)
    c_n2 = math.log(tau ** 1.25 / eps0 * B0) / math.log(r_minus)
    C1 = c_i1 + 1.0
    C2 = c_i2 + c_n2 + T
    # fitted envelope: least-squares slope, intercept raised to cover every point
    xs = [T * k for k in ks[:K]]
    ys = [ih[j] + nh[j + 1] for j in range(K)]
    mx, my = sum(xs) / K, sum(ys) / K
    sxx = sum((x - mx) ** 2 for x in xs)
    c1f = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sxx if sxx else 0.0
    c2f = max(y - c1f * x for x, y in zip(xs, ys)) + 1.0
    return ChainGenerations(tuple(ks[:K]), tuple(nh), tuple(ih[:K]), C1, C2, c1f, c2f)
