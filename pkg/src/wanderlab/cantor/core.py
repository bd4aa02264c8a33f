"""Bridges, gaps, thickness, the Gap Lemma and distortion checks on finite covers.

A Cantor set is represented by its depth-G bridge cover. Bridges of generation k
are stored as arrays indexed by the itinerary read as a base-r number (first
letter most significant); the children of bridge i are r*i + (letter - 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from ..maps import ScalarMap, period_orbit_quadratic, quadratic
from .backend import kernels

Array = np.ndarray


class MarkovError(ValueError):
    """A child bridge does not map onto its parent under the expanding map."""


# ---------------------------------------------------------------- data types


@dataclass(frozen=True)
class Bridge:
    kind: str
    generation: int
    itinerary: tuple[int, ...]
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"degenerate bridge [{self.lo}, {self.hi}]")
        if len(self.itinerary) != self.generation:
            raise ValueError("itinerary length must equal generation")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol


@dataclass(frozen=True)
class Gap:
    lo: float
    hi: float
    left: Bridge
    right: Bridge
    generation: int

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class ThicknessReport:
    tau: float
    point: float
    bridge: tuple[float, float]
    gap: tuple[float, float]
    depth: int
    method: str = "cover"


@dataclass(frozen=True)
class ExpandingSystem:
    """Inverse branches of an expanding Markov map, acting in a chart coordinate.

    `branches[i]` maps the base bridge onto the generation-1 bridge with letter i+1.
    `to_line` sends chart coordinates to the line (monotone), `line_length` measures
    a chart interval on the line. `line_branches`, `psi` and `steps` describe the same
    system directly on the line for derivative sampling: letter i is undone by
    `steps[i]` applications of `psi`.
    """

    kind: str
    base: tuple[float, float]
    branches: tuple[Callable[[Array], Array], ...]
    forward: tuple[Callable[[Array], Array], ...]
    to_line: Callable[[Array], Array]
    line_length: Callable[[Array, Array], Array]
    line_branches: tuple[Callable[[Array], Array], ...]
    line_base: tuple[float, float]
    psi: ScalarMap
    steps: tuple[int, ...]
    label: str = ""
    tent_m: int | None = None
    ratios: tuple[float, ...] | None = None

    @property
    def r(self) -> int:
        return len(self.branches)


def _identity(c: Array) -> Array:
    return c


def _diff_length(a: Array, b: Array) -> Array:
    return np.abs(np.asarray(b) - np.asarray(a))


def affine_s_system(c1: float, c2: float, base: tuple[float, float] = (0.0, 1.0),
                    label: str = "") -> ExpandingSystem:
    """Two orientation-preserving affine branches with contraction ratios c1 (left) and c2 (right)."""
    lo, hi = base
    w = hi - lo
    if not (0 < c1 and 0 < c2 and c1 + c2 < 1):
        raise ValueError("need positive ratios with c1 + c2 < 1")
    h1 = lambda x: lo + c1 * (np.asarray(x) - lo)
    h2 = lambda x: hi - c2 * (hi - np.asarray(x))
    f1 = lambda x: lo + (np.asarray(x) - lo) / c1
    f2 = lambda x: hi - (hi - np.asarray(x)) / c2

    def psi(x: float) -> float:
        return float(f1(x)) if x <= lo + c1 * w else float(f2(x))

    def dpsi(x: float) -> float:
        return 1.0 / c1 if x <= lo + c1 * w else 1.0 / c2

    return ExpandingSystem(
        kind="s", base=base, branches=(h1, h2), forward=(f1, f2), to_line=_identity,
        line_length=_diff_length, line_branches=(h1, h2), line_base=base,
        psi=ScalarMap(psi, dpsi, {"c1": c1, "c2": c2}, "affine"), steps=(1, 1),
        label=label or f"affine({c1},{c2})", ratios=(c1, c2))


def middle_cantor(gap_fraction: float) -> ExpandingSystem:
    """Symmetric affine Cantor set on [0,1] removing the middle `gap_fraction`."""
    c = 0.5 * (1.0 - gap_fraction)
    return affine_s_system(c, c, label=f"middle-{gap_fraction:g}")


def slimmed(system: ExpandingSystem, a0: int) -> ExpandingSystem:
    """Replace the two branches by h_w o h_1^(a0-1), w = 1, 2 (a higher iterate on a thinner set)."""
    if system.r != 2 or a0 < 1:
        raise ValueError("slimming applies to two-branch systems with a0 >= 1")
    if a0 == 1:
        return system
    h1, h2 = system.branches
    f1, f2 = system.forward

    def pow_(f, k):
        def g(x):
            for _ in range(k):
                x = f(x)
            return x
        return g

    inner, outer = pow_(h1, a0 - 1), pow_(f1, a0 - 1)
    branches = (lambda x: h1(inner(x)), lambda x: h2(inner(x)))
    forward = (lambda x: outer(f1(x)), lambda x: outer(f2(x)))
    lh1, lh2 = system.line_branches
    linner = pow_(lh1, a0 - 1)
    ratios = None
    if system.ratios is not None:
        ratios = (system.ratios[0] ** a0, system.ratios[1] * system.ratios[0] ** (a0 - 1))
    return ExpandingSystem(
        kind=system.kind, base=system.base, branches=branches, forward=forward,
        to_line=system.to_line, line_length=system.line_length,
        line_branches=(lambda x: lh1(linner(x)), lambda x: lh2(linner(x))),
        line_base=system.line_base, psi=system.psi, steps=(a0, a0),
        label=f"{system.label}^{a0}", ratios=ratios)


def _tent_to_line(t: Array) -> Array:
    return 2.0 * np.cos(np.pi * np.asarray(t))


def _tent_line_length(a: Array, b: Array) -> Array:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(4.0 * np.sin(np.pi * (a + b) / 2.0) * np.sin(np.pi * (b - a) / 2.0))


def quadratic_u_system(mu: float, m: int) -> ExpandingSystem:
    """The u-side system of x -> x^2 + mu attached to the period-m orbit.

    At mu = -2 the chart is the tent coordinate t with x = 2cos(pi t), in which the
    branches are affine: H_z(s) = 2^-(z-1) - 2^-z s. Otherwise the chart is x itself.
    """
    if m < 3:
        raise ValueError("m must be at least 3")
    F = quadratic(mu)

    def hminus(y):
        v = np.asarray(y) - mu
        if np.any(v < -1e-15):
            raise ArithmeticError("preimage branch empty")
        return -np.sqrt(np.maximum(v, 0.0))

    def hplus(y):
        v = np.asarray(y) - mu
        if np.any(v < -1e-15):
            raise ArithmeticError("preimage branch empty")
        return np.sqrt(np.maximum(v, 0.0))

    def line_branch(z: int):
        def h(y):
            x = hminus(y)
            for _ in range(z - 1):
                x = hplus(x)
            return x
        return h

    def line_forward(z: int):
        def f(x):
            x = np.asarray(x)
            for _ in range(z):
                x = x * x + mu
            return x
        return f

    delta = 1.0 / (2 ** m - 1)
    tent_guess = 2.0 * math.cos(math.pi * (1.0 - delta))
    orbit = period_orbit_quadratic(mu, m, tent_guess)
    q1, q2 = min(orbit), max(orbit)
    if abs(q1 * q1 + mu - q2) > 1e-9:
        raise ArithmeticError("period-m orbit does not have F(q1) = q2")
    lbr = tuple(line_branch(z) for z in range(1, m))
    if mu == -2.0:
        def tent_branch(z: int):
            a, b = 2.0 ** -(z - 1), 2.0 ** -z
            return lambda s: a - b * np.asarray(s)

        def tent_forward(z: int):
            a, b = 2.0 ** -(z - 1), 2.0 ** -z
            return lambda t: (a - np.asarray(t)) / b

        return ExpandingSystem(
            kind="u", base=(2.0 * delta, 1.0 - delta),
            branches=tuple(tent_branch(z) for z in range(1, m)),
            forward=tuple(tent_forward(z) for z in range(1, m)),
            to_line=_tent_to_line, line_length=_tent_line_length,
            line_branches=lbr, line_base=(q1, q2), psi=F, steps=tuple(range(1, m)),
            label=f"quadratic(mu=-2,m={m})", tent_m=m)
    return ExpandingSystem(
        kind="u", base=(q1, q2), branches=lbr,
        forward=tuple(line_forward(z) for z in range(1, m)),
        to_line=_identity, line_length=_diff_length, line_branches=lbr,
        line_base=(q1, q2), psi=F, steps=tuple(range(1, m)),
        label=f"quadratic(mu={mu},m={m})")


# ---------------------------------------------------------------- approximations


@dataclass(frozen=True)
class CantorApprox:
    system: ExpandingSystem
    depth: int
    levels: tuple[tuple[Array, Array], ...] = field(repr=False)

    @property
    def kind(self) -> str:
        return self.system.kind

    @property
    def r(self) -> int:
        return self.system.r

    def count(self, gen: int) -> int:
        return self.r ** gen

    def chart(self, gen: int) -> tuple[Array, Array]:
        """Chart-coordinate (a, b) endpoints with a < b in the chart."""
        return self.levels[gen]

    def line(self, gen: int) -> tuple[Array, Array, Array]:
        """Line intervals (lo, hi, length) of all generation-`gen` bridges, itinerary order."""
        a, b = self.levels[gen]
        xa, xb = self.system.to_line(a), self.system.to_line(b)
        lo, hi = np.minimum(xa, xb), np.maximum(xa, xb)
        return lo, hi, self.system.line_length(a, b)

    def itinerary(self, gen: int, index: int) -> tuple[int, ...]:
        digits = []
        for _ in range(gen):
            index, d = divmod(index, self.r)
            digits.append(d + 1)
        return tuple(reversed(digits))

    def index_of(self, itinerary: Sequence[int]) -> int:
        idx = 0
        for z in itinerary:
            if not 1 <= z <= self.r:
                raise ValueError(f"letter {z} outside 1..{self.r}")
            idx = idx * self.r + (z - 1)
        return idx

    def bridge(self, gen: int, index: int) -> Bridge:
        lo, hi = self._line_one(gen, index)
        return Bridge(self.kind, gen, self.itinerary(gen, index), float(lo), float(hi))

    def _line_one(self, gen: int, index: int):
        a, b = self.levels[gen][0][index], self.levels[gen][1][index]
        xa, xb = self.system.to_line(a), self.system.to_line(b)
        return min(xa, xb), max(xa, xb)

    def bridge_by_itinerary(self, itinerary: Sequence[int]) -> Bridge:
        return self.bridge(len(itinerary), self.index_of(itinerary))

    def bridges(self, gen: int) -> Iterator[Bridge]:
        lo, hi, _ = self.line(gen)
        for i in range(len(lo)):
            yield Bridge(self.kind, gen, self.itinerary(gen, i), float(lo[i]), float(hi[i]))

    def cover(self, gen: int) -> tuple[Array, Array, Array]:
        """Sorted line cover at generation `gen`: (lo, hi, order) with order[i] the bridge index."""
        lo, hi, _ = self.line(gen)
        order = np.argsort(lo, kind="stable")
        return lo[order], hi[order], order

    def hull(self) -> tuple[float, float]:
        lo, hi, _ = self.line(0)
        return float(lo[0]), float(hi[0])

    def gaps(self, gen: int) -> list[Gap]:
        """Gaps of the generation-`gen` cover, each tagged with the generation at which it opens."""
        lo, hi, order = self.cover(gen)
        out = []
        for i in range(len(lo) - 1):
            li, ri = int(order[i]), int(order[i + 1])
            opened = _common_prefix(self.itinerary(gen, li), self.itinerary(gen, ri)) + 1
            out.append(Gap(float(hi[i]), float(lo[i + 1]),
                           Bridge(self.kind, gen, self.itinerary(gen, li), float(lo[i]), float(hi[i])),
                           Bridge(self.kind, gen, self.itinerary(gen, ri), float(lo[i + 1]), float(hi[i + 1])),
                           opened))
        return out

    def leading_point(self, gen: int, index: int) -> float:
        """Boundary point shared with the child of last letter 1."""
        return self._shared_point(gen, index, 1)

    def bottom_point(self, gen: int, index: int) -> float:
        """Boundary point shared with the child of last letter r (m-1 for u-bridges)."""
        return self._shared_point(gen, index, self.r)

    def _shared_point(self, gen: int, index: int, letter: int) -> float:
        if gen + 1 > self.depth:
            raise ValueError("need one more generation than the bridge")
        a, b = self.levels[gen][0][index], self.levels[gen][1][index]
        ca = self.levels[gen + 1][0][index * self.r + letter - 1]
        cb = self.levels[gen + 1][1][index * self.r + letter - 1]
        cand = [a, b]
        dists = [min(abs(a - ca), abs(a - cb)), min(abs(b - ca), abs(b - cb))]
        return float(self.system.to_line(np.asarray(cand[int(np.argmin(dists))])))

    def with_depth(self, depth: int) -> "CantorApprox":
        if depth > self.depth:
            raise ValueError("cannot deepen a built approximation; rebuild instead")
        return CantorApprox(self.system, depth, self.levels[: depth + 1])


def _common_prefix(u: Sequence[int], v: Sequence[int]) -> int:
    n = 0
    for a, b in zip(u, v):
        if a != b:
            break
        n += 1
    return n


def iter_levels(system: ExpandingSystem, depth: int) -> Iterator[tuple[Array, Array]]:
    """Yield chart endpoints generation by generation (only two levels held at a time)."""
    a = np.array([min(system.base)], dtype=float)
    b = np.array([max(system.base)], dtype=float)
    yield a, b
    for _ in range(depth):
        na, nb = [], []
        for h in system.branches:
            x, y = h(a), h(b)
            na.append(np.minimum(x, y))
            nb.append(np.maximum(x, y))
        a, b = np.concatenate(na), np.concatenate(nb)
        if np.any(np.isnan(a)) or np.any(np.isnan(b)):
            raise ArithmeticError("preimage branch empty")
        yield a, b


def _build(system: ExpandingSystem, depth: int, markov_tol: float, check_gens: int) -> CantorApprox:
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    levels = tuple(iter_levels(system, depth))
    for k in range(min(depth, check_gens)):
        _check_markov(system, levels[k], levels[k + 1], markov_tol)
    return CantorApprox(system, depth, levels)


def _check_markov(system: ExpandingSystem, parent: tuple[Array, Array],
                  child: tuple[Array, Array], tol: float) -> None:
    """The letter-w1 block of generation k+1, pushed forward, must equal generation k."""
    n = len(parent[0])
    scale = max(abs(system.base[0]), abs(system.base[1]), 1.0)
    for i, f in enumerate(system.forward):
        a = child[0][i * n:(i + 1) * n]
        b = child[1][i * n:(i + 1) * n]
        fa, fb = f(a), f(b)
        lo, hi = np.minimum(fa, fb), np.maximum(fa, fb)
        err = max(np.max(np.abs(lo - parent[0])), np.max(np.abs(hi - parent[1])))
        if err > tol * scale:
            raise MarkovError(f"branch {i + 1}: image misses parent by {err:.3g}")


def s_bridges(system: ExpandingSystem, depth: int, slim: bool = False,
              markov_tol: float = 1e-9, check_gens: int = 8) -> CantorApprox:
    """2^k bridges per generation k <= depth.

    With slim=True the system is first replaced by its smallest iterate whose
    generation-1 bridges are shorter than 9/21 of the base bridge.
    """
    if system.r != 2:
        raise ValueError("s-bridges need exactly two Markov intervals")
    b0, b1 = system.base
    if slim:
        for a0 in range(1, 64):
            cand = slimmed(system, a0)
            w = [abs(h(b1) - h(b0)) for h in cand.branches]
            if max(w) < (9.0 / 21.0) * abs(b1 - b0):
                system = cand
                break
        else:
            raise ValueError("no iterate makes the generation-1 bridges slim")
    x1 = sorted((float(system.branches[0](b0)), float(system.branches[0](b1))))
    x2 = sorted((float(system.branches[1](b0)), float(system.branches[1](b1))))
    if not (x1[1] < x2[0] or x2[1] < x1[0]):
        raise MarkovError("generation-1 bridges overlap")
    return _build(system, depth, markov_tol, check_gens)


def u_bridges_quadratic(mu: float, m: int, depth: int, markov_tol: float = 1e-9,
                        check_gens: int = 6) -> CantorApprox:
    """(m-1)^k u-bridges per generation for x -> x^2 + mu and its period-m orbit."""
    system = quadratic_u_system(mu, m)
    return _build(system, depth, markov_tol, check_gens)


# ---------------------------------------------------------------- thickness


def thickness(approx: CantorApprox, depth: int | None = None) -> ThicknessReport:
    """Infimum over gap boundary points of |bridge| / |gap| on the depth-`depth` cover.

    The exterior of the hull counts as an infinitely long gap.
    """
    depth = approx.depth if depth is None else depth
    if depth < 1:
        raise ValueError("thickness needs depth >= 1 (no gaps at depth 0)")
    if depth > approx.depth:
        raise ValueError("depth exceeds the built depth")
    if approx.system.tent_m is not None:
        from .tent import tent_thickness
        return tent_thickness(approx.system.tent_m, depth)
    lo, hi, _ = approx.cover(depth)
    tau, gi, side, blo, bhi = kernels.sorted_thickness(np.ascontiguousarray(lo),
                                                       np.ascontiguousarray(hi))
    g = (float(hi[gi]), float(lo[gi + 1]))
    point = g[0] if side < 0 else g[1]
    return ThicknessReport(float(tau), point, (float(blo), float(bhi)), g, depth)


# ---------------------------------------------------------------- Gap Lemma


@dataclass(frozen=True)
class GapLemmaResult:
    applicable: bool
    linked: bool
    tau_product: float
    witness: float | None
    chain: tuple[tuple[Bridge, Bridge], ...]
    depth: int
    reason: str


def _inside_gap(lo_k: float, hi_k: float, cover_lo: Array, cover_hi: Array) -> tuple[float, float] | None:
    """The (open) gap of the cover whose interior contains [lo_k, hi_k], if any."""
    if hi_k < cover_lo[0]:
        return (-math.inf, float(cover_lo[0]))
    if lo_k > cover_hi[-1]:
        return (float(cover_hi[-1]), math.inf)
    i = int(np.searchsorted(cover_hi, lo_k, side="left"))
    # gap i-1 is (cover_hi[i-1], cover_lo[i])
    if 0 < i < len(cover_lo) and cover_hi[i - 1] < lo_k and hi_k < cover_lo[i]:
        return (float(cover_hi[i - 1]), float(cover_lo[i]))
    return None


def linked(K1: CantorApprox, K2: CantorApprox, depth: int) -> tuple[bool, str]:
    c1, c2 = K1.cover(depth), K2.cover(depth)
    h1 = (float(c1[0][0]), float(c1[1][-1]))
    h2 = (float(c2[0][0]), float(c2[1][-1]))
    g = _inside_gap(h1[0], h1[1], c2[0], c2[1])
    if g is not None:
        return False, f"K1 lies inside the gap {g} of K2"
    g = _inside_gap(h2[0], h2[1], c1[0], c1[1])
    if g is not None:
        return False, f"K2 lies inside the gap {g} of K1"
    return True, "linked"


def gap_lemma_check(K1: CantorApprox, K2: CantorApprox, depth: int | None = None,
                    tau1: float | None = None, tau2: float | None = None) -> GapLemmaResult:
    """Apply the Gap Lemma on depth-G covers and, when it applies, return an intersection witness."""
    G = min(K1.depth, K2.depth) if depth is None else depth
    t1 = thickness(K1, G).tau if tau1 is None else tau1
    t2 = thickness(K2, G).tau if tau2 is None else tau2
    ok, why = linked(K1, K2, G)
    prod = t1 * t2
    if not ok:
        return GapLemmaResult(False, False, prod, None, (), G, f"not linked: {why}")
    if not prod > 1.0:
        return GapLemmaResult(False, True, prod, None, (), G,
                              f"thickness product {prod:.6g} is not > 1")
    lo1, hi1, o1 = K1.cover(G)
    lo2, hi2, o2 = K2.cover(G)
    i = j = 0
    while i < len(lo1) and j < len(lo2):
        if hi1[i] < lo2[j]:
            i += 1
        elif hi2[j] < lo1[i]:
            j += 1
        else:
            x = float(max(lo1[i], lo2[j]))
            chain = tuple(
                (K1.bridge(g, int(o1[i]) // K1.r ** (G - g)), K2.bridge(g, int(o2[j]) // K2.r ** (G - g)))
                for g in range(G + 1))
            return GapLemmaResult(True, True, prod, x, chain, G, "witness found")
    raise ArithmeticError("Gap Lemma hypotheses hold but the covers do not meet")


# ---------------------------------------------------------------- distortion


@dataclass(frozen=True)
class LetterStats:
    letter: int
    min_ratio: float
    max_ratio: float
    lower: float
    upper: float
    count: int

    @property
    def passed(self) -> bool:
        return self.lower <= self.min_ratio and self.max_ratio <= self.upper


@dataclass(frozen=True)
class DistortionReport:
    generations: tuple[int, int]
    letters: tuple[LetterStats, ...]
    min_child_over_bottom_interval: float | None = None
    min_gap_over_child: float | None = None
    min_neighbour_over_child: float | None = None

    @property
    def passed(self) -> bool:
        ok = all(s.passed for s in self.letters)
        if self.min_child_over_bottom_interval is not None:
            ok = ok and self.min_child_over_bottom_interval >= 1.0 / 3.0
        return ok


def u_ratio_bounds(j: int) -> tuple[float, float]:
    return 3.0 * 2.0 ** (j - 2), 5.0 * 2.0 ** (j - 2)


def distortion_report(approx: CantorApprox, generations: Sequence[int],
                      bounds: Callable[[int], tuple[float, float]] | None = None) -> DistortionReport:
    """Parent/child length ratios grouped by the child's last letter, for parents in `generations`.

    For u-bridges also reports the bottom-interval ratio and the connecting-gap ratios.
    """
    gens = sorted(generations)
    if gens[-1] + 1 > approx.depth:
        raise ValueError("need one generation beyond the last parent generation")
    if bounds is None:
        if approx.kind != "u":
            raise ValueError("s-side bounds must be given")
        bounds = u_ratio_bounds
    r = approx.r
    sysm = approx.system
    mins = np.full(r, np.inf)
    maxs = np.full(r, -np.inf)
    counts = np.zeros(r, dtype=int)
    min_bottom = math.inf
    min_gap = math.inf
    min_nb = math.inf
    for k in gens:
        a, b = approx.chart(k)
        ca, cb = approx.chart(k + 1)
        plen = sysm.line_length(a, b)
        clen = sysm.line_length(ca, cb).reshape(-1, r)
        ratio = plen[:, None] / clen
        mins = np.minimum(mins, ratio.min(axis=0))
        maxs = np.maximum(maxs, ratio.max(axis=0))
        counts += len(plen)
        if approx.kind == "u":
            ca2, cb2 = ca.reshape(-1, r), cb.reshape(-1, r)
            # bottom point: endpoint of the parent shared with the last child
            last_a, last_b = ca2[:, -1], cb2[:, -1]
            bottom = np.where(np.abs(a - last_a) < np.abs(b - last_b), a, b)
            lo_i = np.minimum(ca2, bottom[:, None])
            hi_i = np.maximum(cb2, bottom[:, None])
            ilen = sysm.line_length(lo_i, hi_i)
            min_bottom = min(min_bottom, float(np.min(clen / ilen)))
            # connecting gaps between letters j and j+1
            left_hi = np.minimum(cb2[:, :-1], cb2[:, 1:])
            right_lo = np.maximum(ca2[:, :-1], ca2[:, 1:])
            glen = sysm.line_length(left_hi, right_lo)
            min_gap = min(min_gap, float(np.min(glen / clen[:, :-1])))
            min_nb = min(min_nb, float(np.min(clen[:, 1:] / clen[:, :-1])))
    letters = tuple(LetterStats(j + 1, float(mins[j]), float(maxs[j]), *bounds(j + 1), int(counts[j]))
                    for j in range(r))
    if approx.kind == "u":
        return DistortionReport((gens[0], gens[-1]), letters, min_bottom, min_gap, min_nb)
    return DistortionReport((gens[0], gens[-1]), letters)


def kappa_threshold(approx: CantorApprox, max_generation: int | None = None) -> int | None:
    """Smallest generation from which every u-ratio check passes up to the built depth."""
    top = approx.depth - 1 if max_generation is None else max_generation
    first = None
    for k in range(top, -1, -1):
        if distortion_report(approx, [k]).passed:
            first = k
        else:
            break
    return first


@dataclass(frozen=True)
class DistortionConstant:
    delta: float
    c: float
    exponent: float | None
    samples: int


def _log_branch_derivative(system: ExpandingSystem, word: Sequence[int], y: Array) -> Array:
    """log |(Psi^N)'(q)| at q = H_word(y), computed forward along the orbit of q."""
    x = np.asarray(y, dtype=float)
    for z in reversed(word):
        x = system.line_branches[z - 1](x)
    total = np.zeros_like(x)
    for z in word:
        for _ in range(system.steps[z - 1]):
            total += np.log(np.abs(np.vectorize(system.psi.derivative)(x)))
            x = np.vectorize(system.psi.eval)(x)
    return total


def distortion_constant(system_or_approx, delta: float, n: int = 6, samples: int = 400,
                        seed: int = 0, fit: bool = True) -> DistortionConstant:
    """Empirical sup of |log (Psi^N)'(q) - log (Psi^N)'(q~)| over sampled pairs whose
    images after N steps lie within `delta` in the base bridge, with N the block length of n letters."""
    system = system_or_approx.system if isinstance(system_or_approx, CantorApprox) else system_or_approx
    if delta <= 0:
        raise ValueError("delta must be positive")
    lo, hi = sorted(system.line_base)
    if delta >= hi - lo:
        raise ValueError("no admissible pairs at this delta")
    rng = np.random.default_rng(seed)

    def c_at(d: float) -> float:
        words = rng.integers(1, system.r + 1, size=(samples, n))
        y = rng.uniform(lo, hi - d, size=samples)
        yt = y + d * rng.uniform(0.0, 1.0, size=samples)
        worst = 0.0
        for w, a, b in zip(words, y, yt):
            la = _log_branch_derivative(system, w, np.array([a]))[0]
            lb = _log_branch_derivative(system, w, np.array([b]))[0]
            worst = max(worst, abs(la - lb))
        return worst

    c = c_at(delta)
    exponent = None
    if fit:
        ds = delta * 2.0 ** -np.arange(4)
        cs = np.array([c] + [c_at(d) for d in ds[1:]])
        if np.all(cs > 0):
            exponent = float(np.polyfit(np.log(ds), np.log(cs), 1)[0])
    return DistortionConstant(delta, float(c), exponent, samples)
