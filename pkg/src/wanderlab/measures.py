"""Empirical measures along orbits, a bounded-Lipschitz distance and historic-behaviour
detection on the symbolic itinerary of a rectangle chain.

Along round k of a chain the orbit spends z_k k^2 steps near the saddle p, k^2 steps near
the second saddle p_hat and a linear-in-k remainder elsewhere.  Averages at the round
ends therefore drift towards the mixtures nu0 (z0 blocks) and nu1 (z0 + 1 blocks); when
the blocks grow geometrically the averages keep swinging between the two.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .wander import Generations, Schedule


class MeasureError(ValueError):
    """Degenerate input: empty measure, orbit too short, coincident targets, ..."""


Point = tuple[float, ...]


@dataclass(frozen=True)
class EmpiricalMeasure:
    atoms: tuple[tuple[Point, float], ...]

    def __post_init__(self) -> None:
        if not self.atoms:
            raise MeasureError("empty measure")
        w = [a[1] for a in self.atoms]
        if min(w) < 0 or abs(math.fsum(w) - 1) > 1e-12:
            raise MeasureError(f"weights must be non-negative and sum to 1, got {math.fsum(w)!r}")
        dims = {len(p) for p, _ in self.atoms}
        if len(dims) != 1:
            raise MeasureError("atoms live in different dimensions")

    @classmethod
    def from_counts(cls, counts: dict) -> "EmpiricalMeasure":
        """Merge coincident atoms; `counts` maps points to non-negative numbers."""
        total = sum(counts.values())
        if total <= 0:
            raise MeasureError("empty measure")
        return cls(tuple((tuple(float(c) for c in p), float(Fraction(n) / Fraction(total)))
                         for p, n in sorted(counts.items()) if n))

    def weight(self, point: Sequence[float]) -> float:
        p = tuple(float(c) for c in point)
        return math.fsum(w for q, w in self.atoms if q == p)

    def mix(self, other: "EmpiricalMeasure", t: float) -> "EmpiricalMeasure":
        """(1 - t) self + t other."""
        acc: dict = {}
        for p, w in self.atoms:
            acc[p] = acc.get(p, 0.0) + (1 - t) * w
        for p, w in other.atoms:
            acc[p] = acc.get(p, 0.0) + t * w
        tot = math.fsum(acc.values())
        return EmpiricalMeasure(tuple((p, w / tot) for p, w in sorted(acc.items()) if w > 0))


def dirac(p: Sequence[float]) -> EmpiricalMeasure:
    return EmpiricalMeasure(((tuple(float(c) for c in p), 1.0),))


def empirical(orbit: Sequence[Sequence[float]], m: int) -> EmpiricalMeasure:
    """Uniform weights 1/(m+1) on the first m+1 orbit points, coincident points merged."""
    if m < 0 or m >= len(orbit):
        raise MeasureError(f"m = {m} needs at least {m + 1} orbit points, have {len(orbit)}")
    counts: dict = {}
    for x in orbit[: m + 1]:
        key = tuple(float(c) for c in x)
        counts[key] = counts.get(key, 0) + 1
    return EmpiricalMeasure.from_counts(counts)


def bl_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """sup of int g d(mu - nu) over |g| <= 1, Lip(g) <= 1, with g sampled on the atoms.

    On a finite set every such sample extends to the whole space (McShane extension
    followed by truncation), so the linear program is exact for atomic measures.
    """
    pts = sorted({p for p, _ in mu.atoms} | {p for p, _ in nu.atoms})
    if len({len(p) for p in pts}) != 1:
        raise MeasureError("atoms live in different dimensions")
    idx = {p: i for i, p in enumerate(pts)}
    n = len(pts)
    d = np.zeros(n)
    for p, w in mu.atoms:
        d[idx[p]] += w
    for p, w in nu.atoms:
        d[idx[p]] -= w
    if n == 1 or not np.any(np.abs(d) > 0):
        return 0.0
    X = np.array(pts, dtype=float)
    rows, rhs = [], []
    for i in range(n):
        for j in range(i + 1, n):
            dist = float(np.linalg.norm(X[i] - X[j]))
            if dist >= 2:
                continue  # implied by the sup bound
            r = np.zeros(n)
            r[i], r[j] = 1.0, -1.0
            rows += [r, -r]
            rhs += [dist, dist]
    res = linprog(-d, A_ub=np.array(rows) if rows else None, b_ub=np.array(rhs) if rhs else None,
                  bounds=[(-1.0, 1.0)] * n, method="highs")
    if not res.success:
        raise MeasureError(f"linear program failed: {res.message}")
    return max(0.0, float(-res.fun))


def nu_targets(z0: int, p: Sequence[float], p_hat: Sequence[float]) -> tuple[EmpiricalMeasure, EmpiricalMeasure]:
    """(z0 delta_p + delta_phat)/(z0 + 1) and ((z0+1) delta_p + delta_phat)/(z0 + 2)."""
    if z0 < 1:
        raise MeasureError("z0 must be positive")
    p, ph = tuple(float(c) for c in p), tuple(float(c) for c in p_hat)
    if p == ph:
        raise MeasureError("p and p_hat coincide")
    nu0 = EmpiricalMeasure.from_counts({p: z0, ph: 1})
    nu1 = EmpiricalMeasure.from_counts({p: z0 + 1, ph: 1})
    return nu0, nu1


def schedule_from_switches(z0: int, switches: Sequence[int] = ()) -> Schedule:
    return Schedule(z0, tuple(switches))


def geometric_switches(first: int, ratio: float, k_max: int) -> tuple[int, ...]:
    """first, first*ratio, ... rounded up and kept strictly increasing, all <= k_max."""
    if first < 1 or ratio <= 1:
        raise MeasureError("need first >= 1 and ratio > 1")
    out, x = [], float(first)
    while x <= k_max:
        k = math.ceil(x - 1e-9)
        if not out or k > out[-1]:
            out.append(k)
        x *= ratio
    return tuple(out)


# ---------------------------------------------------------------- symbolic itinerary


@dataclass(frozen=True)
class RoundCounts:
    k: int
    at_p: int
    at_phat: int
    other: int

    @property
    def length(self) -> int:
        return self.at_p + self.at_phat + self.other


def round_counts(k: int, schedule: Schedule, gens: Generations, N: tuple[int, int, int] = (1, 1, 1)) -> RoundCounts:
    """Steps of round k near p, near p_hat and elsewhere (corridors, H and transit)."""
    z = schedule.z(k)
    other = N[0] + gens.i_hat(k) + N[1] + gens.n_hat_next(k) + k + N[2]
    return RoundCounts(k, z * k * k, k * k, other)


@dataclass(frozen=True)
class Checkpoint:
    k: int
    m_hat: int
    at_p: int
    at_phat: int
    other: int  # counts over the m_hat + 1 orbit points 0..m_hat

    def measure(self, p: Point, p_hat: Point, elsewhere: Point) -> EmpiricalMeasure:
        return EmpiricalMeasure.from_counts({p: self.at_p, p_hat: self.at_phat, elsewhere: self.other})

    def fractions(self) -> tuple[float, float, float]:
        n = self.m_hat + 1
        return (self.at_p / n, self.at_phat / n, self.other / n)


def symbolic_run(schedule: Schedule, k0: int, k_max: int, gens: Generations | None = None,
                 N: tuple[int, int, int] = (1, 1, 1)) -> tuple[Checkpoint, ...]:
    """Cumulative counts at every round end m_hat_k, k = k0..k_max.

    Position 0 sits in R_k0 and each round contributes m_k positions; the final
    position m_hat_k is back in the tangency chart and counts as elsewhere.
    """
    gens = gens or Generations.linear()
    out = []
    ap = aph = oth = 0
    m_hat = 0
    for k in range(k0, k_max + 1):
        rc = round_counts(k, schedule, gens, N)
        ap, aph, oth = ap + rc.at_p, aph + rc.at_phat, oth + rc.other
        m_hat += rc.length
        out.append(Checkpoint(k, m_hat, ap, aph, oth + 1))
    return tuple(out)


def segment_counts(a: Checkpoint, b: Checkpoint) -> tuple[int, int, int]:
    """Counts on positions m_hat_a + 1 .. m_hat_b; with a's counts they give b's."""
    return (b.at_p - a.at_p, b.at_phat - a.at_phat, b.other - a.other)


# ---------------------------------------------------------------- historic detection


@dataclass(frozen=True)
class HistoricReport:
    switches: tuple[int, ...]
    checkpoints: tuple[Checkpoint, ...]       # at the switch indices
    dist_nu0: tuple[float, ...]
    dist_nu1: tuple[float, ...]
    labels: tuple[int, ...]                   # 2-means cluster of each checkpoint
    centers: tuple[EmpiricalMeasure, EmpiricalMeasure]
    target_distance: float                    # d(nu0, nu1)
    min_inter_cluster: float
    final_to_targets: tuple[float, float]
    converging: bool
    tolerance: float
    historic: bool
    phat_liminf: float

    def to_json(self, extra: dict | None = None) -> str:
        body = {"switches": list(self.switches), "labels": list(self.labels),
                "target_distance": self.target_distance,
                "min_inter_cluster": self.min_inter_cluster,
                "final_to_targets": list(self.final_to_targets), "converging": self.converging,
                "tolerance": self.tolerance, "historic": self.historic,
                "phat_liminf": self.phat_liminf}
        if extra:
            body.update(extra)
        return json.dumps(body, sort_keys=True, indent=2)


def _kmeans2(ms: list[EmpiricalMeasure], init: list[int], iters: int = 50) -> tuple[list[int], list[EmpiricalMeasure]]:
    labels = list(init)
    centers: list[EmpiricalMeasure] = []
    for _ in range(iters):
        centers = []
        for c in (0, 1):
            members = [m for m, l in zip(ms, labels) if l == c]
            if not members:
                members = ms
            cen = members[0]
            for j, m in enumerate(members[1:], 2):
                cen = cen.mix(m, 1 / j)
            centers.append(cen)
        new = [0 if bl_distance(m, centers[0]) <= bl_distance(m, centers[1]) else 1 for m in ms]
        if new == labels:
            break
        labels = new
    return labels, centers


def _settles(ds: Sequence[float], floor: float) -> bool:
    """Strictly decreasing until the first value below `floor`, then never above it.

    With blocks growing by a fixed ratio the earlier blocks keep a fixed share of the
    average, so distances level off at a small positive floor instead of reaching zero.
    """
    inside = False
    for x, y in zip(ds, ds[1:]):
        inside = inside or x <= floor
        if (inside and y > floor) or (not inside and y >= x):
            return False
    return len(ds) >= 2


def historic_detect(schedule: Schedule, k_max: int, checkpoints_at: Sequence[int] | None = None,
                    gens: Generations | None = None, k0: int = 1,
                    p: Point = (0.0, 0.0), p_hat: Point = (2.0, 0.0), elsewhere: Point = (1.0, 1.0),
                    tolerance: float = 0.05, N: tuple[int, int, int] = (1, 1, 1)) -> HistoricReport:
    """Cluster the averages at the switch checkpoints and compare with nu0, nu1.

    Historic iff, after the first cycle, 2-means separates the checkpoints by parity, the
    even and odd ones approach nu0 and nu1 (monotonically until they settle inside half
    the tolerance), end within `tolerance` of them, and consecutive checkpoints stay at
    least half of d(nu0, nu1) apart.
    """
    switches = tuple(checkpoints_at) if checkpoints_at is not None else schedule.switches
    switches = tuple(k for k in switches if k0 <= k <= k_max)
    if len(switches) < 4:
        raise MeasureError("horizon too short for two switch cycles")
    run = {c.k: c for c in symbolic_run(schedule, k0, k_max, gens, N)}
    cps = tuple(run[k] for k in switches)
    ms = [c.measure(p, p_hat, elsewhere) for c in cps]
    nu0, nu1 = nu_targets(schedule.z0, p, p_hat)
    d01 = bl_distance(nu0, nu1)
    d0 = tuple(bl_distance(m, nu0) for m in ms)
    d1 = tuple(bl_distance(m, nu1) for m in ms)
    # the first switch cycle is burn-in: its averages still carry the start-up rounds
    tail = range(2, len(ms))
    tail_labels, centers = _kmeans2([ms[a] for a in tail], [a % 2 for a in tail])
    labels = [-1, -1] + tail_labels
    # cluster matched to nu0 is the one whose center is nearer to nu0
    c0 = 0 if bl_distance(centers[0], nu0) <= bl_distance(centers[1], nu0) else 1
    inter = min(bl_distance(ms[a], ms[a - 1]) for a in tail)
    # even-indexed checkpoints close z0 blocks, odd ones close z0 + 1 blocks
    ev = [d0[a] for a in tail if a % 2 == 0]
    od = [d1[a] for a in tail if a % 2 == 1]
    converging = _settles(ev, tolerance / 2) and _settles(od, tolerance / 2)
    final = (ev[-1], od[-1])
    split = all(labels[a] == (c0 if a % 2 == 0 else 1 - c0) for a in tail)
    historic = bool(split and converging and max(final) <= tolerance and inter >= 0.5 * d01)
    ph = min(c.fractions()[1] for c in cps[len(cps) // 2:])
    return HistoricReport(switches, cps, d0, d1, tuple(labels), (centers[0], centers[1]), d01,
                          inter, final, converging, tolerance, historic, ph)


def checkpoint_csv(rep: HistoricReport, p: Point = (0.0, 0.0), p_hat: Point = (2.0, 0.0)) -> str:
    """Columns k, m_hat, weight_p, weight_phat, weight_other, dist_to_nu0, dist_to_nu1."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["k", "m_hat", "weight_p", "weight_phat", "weight_other", "dist_to_nu0", "dist_to_nu1"])
    for c, a, b in zip(rep.checkpoints, rep.dist_nu0, rep.dist_nu1):
        fp, fph, fo = c.fractions()
        w.writerow([c.k, c.m_hat, repr(fp), repr(fph), repr(fo), repr(a), repr(b)])
    return buf.getvalue()
