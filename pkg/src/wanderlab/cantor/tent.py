"""Thickness of the u-set of x -> x^2 - 2 via exact tent coordinates.

In the tent coordinate t (x = 2cos(pi t)) every u-bridge is an affine copy
c + s 2^-Z [2d, 1-d] of the base bridge, d = 1/(2^m - 1), so positions are exact
rationals with a power-of-two denominator times 2^m - 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .backend import kernels
from .core import ThicknessReport


def tent_thickness(m: int, depth: int, x_coords: bool = True) -> ThicknessReport:
    """Exact-position streaming thickness of the depth-`depth` cover (x or tent coordinates)."""
    if depth < 1:
        raise ValueError("thickness needs depth >= 1 (no gaps at depth 0)")
    tau, den, gl, gr, bl, bh, side, _ = kernels.tent_stream_thickness(m, depth, x_coords)
    if x_coords:
        conv = lambda v: 2.0 * math.cos(math.pi * v / den)
        g = tuple(sorted((conv(gl), conv(gr))))
        b = tuple(sorted((conv(bl), conv(bh))))
        point = conv(gl if side < 0 else gr)
    else:
        g = (gl / den, gr / den)
        b = (bl / den, bh / den)
        point = g[0] if side < 0 else g[1]
    return ThicknessReport(float(tau), point, b, g, depth, "tent-stream")


def tent_coordinate_thickness(m: int) -> float:
    """Thickness of every finite cover in tent coordinates: 2^(m-2) - 1."""
    return float(2 ** (m - 2) - 1)


@dataclass(frozen=True)
class LowerBound:
    bound: float
    exact_part: float
    deep_part: float
    min_kappa: float
    n_leaves: int
    depth: int
    valid: bool


def _sin_range(a: float, b: float) -> tuple[float, float]:
    sa, sb = math.sin(math.pi * a), math.sin(math.pi * b)
    hi = 1.0 if a <= 0.5 <= b else max(sa, sb)
    return min(sa, sb), hi


def tent_thickness_lower_bound(m: int, depth: int, kappa_target: float = 0.75,
                               max_leaves: int = 2_000_000) -> LowerBound:
    """Certified lower bound for the x-thickness of the depth-`depth` cover.

    Bridges are refined adaptively until every unfinished leaf has distortion ratio
    kappa = min|g'| / max|g'| > kappa_target (> 1/2) over its hull, or reaches `depth`.
    Gaps between adaptive leaves are measured exactly, with bridges truncated where a
    leaf may hide a deeper gap at least as long. A gap inside a leaf has ratio at least
    kappa times the tent thickness: tent gaps are 2d 2^-j, so for kappa > 1/2 no tent gap
    shorter than the given one can become at least as long on the line.
    """
    if kappa_target <= 0.5:
        raise ValueError("kappa_target must exceed 1/2")
    zmax = depth * (m - 1)
    q = (1 << m) - 1
    den = q << zmax
    tau_t = tent_coordinate_thickness(m)

    leaves: list[tuple[int, int, float, float]] = []  # (a, b, max inner gap on the line, kappa)

    def visit(c: int, sgn: int, z_acc: int, gen: int) -> None:
        w = 1 << (zmax - z_acc)
        a, b = (c + 2 * w, c + (q - 1) * w) if sgn > 0 else (c - (q - 1) * w, c - 2 * w)
        lo_s, hi_s = _sin_range(a / den, b / den)
        kappa = lo_s / hi_s if hi_s > 0 else 0.0
        if gen == depth:
            leaves.append((a, b, 0.0, 1.0))
            return
        if kappa > kappa_target and gen > 0:
            # largest inner gap is the leading gap: d 2^-Z in tent length
            inner = 2.0 * math.pi * hi_s * (w / den)
            leaves.append((a, b, inner, kappa))
            return
        if len(leaves) > max_leaves:
            raise MemoryError("adaptive refinement exceeded max_leaves")
        order = range(m - 1, 0, -1) if sgn > 0 else range(1, m)
        for z in order:
            visit(c + sgn * (q << (zmax - (z_acc + z - 1))), -sgn, z_acc + z, gen + 1)

    visit(0, 1, 0, 0)
    n = len(leaves)

    def xlen(a: int, b: int) -> float:
        return abs(4.0 * math.sin(math.pi * (a + b) / (2 * den)) * math.sin(math.pi * (b - a) / (2 * den)))

    gaps = [xlen(leaves[i][1], leaves[i + 1][0]) for i in range(n - 1)]
    prev_ge = [-1] * (n - 1)
    next_ge = [n - 1] * (n - 1)
    stack: list[int] = []
    for i, g in enumerate(gaps):
        eq = None
        while stack and gaps[stack[-1]] <= g:
            j = stack.pop()
            next_ge[j] = i
            if gaps[j] == g:
                eq = j
        prev_ge[i] = eq if eq is not None else (stack[-1] if stack else -1)
        stack.append(i)

    def first_blocking(indices, g: float) -> int | None:
        for k in indices:
            if leaves[k][2] >= g:
                return k
        return None

    exact = math.inf
    for i, g in enumerate(gaps):
        start, stop = prev_ge[i] + 1, next_ge[i]
        # left bridge: leaves start..i, truncated at the first leaf that may hide a gap >= g
        k = first_blocking(range(i, start - 1, -1), g)
        if k == i:
            exact = 0.0
            continue
        left = xlen(leaves[start][0] if k is None else leaves[k][1], leaves[i][1])
        k = first_blocking(range(i + 1, stop + 1), g)
        if k == i + 1:
            exact = 0.0
            continue
        right = xlen(leaves[i + 1][0], leaves[stop][1] if k is None else leaves[k][0])
        exact = min(exact, left / g, right / g)

    inner = [lf[3] for lf in leaves if lf[2] > 0.0]
    min_kappa = min(inner) if inner else 1.0
    deep = tau_t * min_kappa if inner else math.inf
    bound = min(exact, deep) * (1.0 - 1e-12)
    return LowerBound(bound, exact, deep, min_kappa, n, depth, min_kappa > 0.5 and bound > 0)
