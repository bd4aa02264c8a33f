"""Pure-Python versions of the compiled thickness kernels (same algorithms)."""
from __future__ import annotations

import math

import numpy as np


def _xlen(a: int, b: int, den: int) -> float:
    mid = (a + b) / (2 * den)
    half = (b - a) / (2 * den)
    return 4.0 * math.sin(math.pi * mid) * math.sin(math.pi * half)


def tent_leaves(m: int, depth: int):
    """Yield depth-`depth` tent leaves (lo, hi) as numerators over (2^m-1)*2^zmax, in order."""
    zmax = depth * (m - 1)
    q = (1 << m) - 1

    def rec(c: int, sgn: int, z_acc: int, lvl: int):
        order = range(m - 1, 0, -1) if sgn > 0 else range(1, m)
        for z in order:
            cc = c + sgn * (q << (zmax - (z_acc + z - 1)))
            if lvl + 1 < depth:
                yield from rec(cc, -sgn, z_acc + z, lvl + 1)
            else:
                w = 1 << (zmax - z_acc - z)
                if -sgn > 0:
                    yield cc + 2 * w, cc + (q - 1) * w
                else:
                    yield cc - (q - 1) * w, cc - 2 * w

    yield from rec(0, 1, 0, 0)


def tent_stream_thickness(m: int, depth: int, x_coords: bool = True):
    if m < 3 or depth < 1:
        raise ValueError("need m >= 3 and depth >= 1")
    zmax = depth * (m - 1)
    q = (1 << m) - 1
    den = q << zmax
    hull_lo, hull_hi = 2 << zmax, (q - 1) << zmax
    best = math.inf
    witness = (0, 0, 0, 0, 0)
    stack: list[tuple[float, int, int]] = []
    prev_hi = None
    n_gaps = 0

    def length(a: int, b: int) -> float:
        return _xlen(a, b, den) if x_coords else (b - a) / den

    for lo, hi in tent_leaves(m, depth):
        if prev_hi is not None:
            n_gaps += 1
            g = length(prev_hi, lo)
            eq = None
            while stack and stack[-1][0] <= g:
                pg, pl, pr = stack.pop()
                if pg == g:
                    eq = pr
                r = length(pr, prev_hi) / pg
                if r < best:
                    best, witness = r, (pl, pr, pr, prev_hi, 1)
            w = eq if eq is not None else (stack[-1][2] if stack else hull_lo)
            r = length(w, prev_hi) / g
            if r < best:
                best, witness = r, (prev_hi, lo, w, prev_hi, -1)
            stack.append((g, prev_hi, lo))
        prev_hi = hi
    while stack:
        pg, pl, pr = stack.pop()
        r = length(pr, hull_hi) / pg
        if r < best:
            best, witness = r, (pl, pr, pr, hull_hi, 1)
    gl, gr, bl, bh, side = witness
    return best, den, gl, gr, bl, bh, side, n_gaps


def sorted_thickness(lo: np.ndarray, hi: np.ndarray):
    n = len(lo)
    if n < 2:
        raise ValueError("need at least two intervals")
    best, bidx, bside, bl, bh = math.inf, -1, 0, 0.0, 0.0
    stack: list[int] = []
    for i in range(n - 1):
        g = lo[i + 1] - hi[i]
        eq = None
        while stack and lo[stack[-1] + 1] - hi[stack[-1]] <= g:
            j = stack.pop()
            if lo[j + 1] - hi[j] == g:
                eq = j
            r = (hi[i] - lo[j + 1]) / (lo[j + 1] - hi[j])
            if r < best:
                best, bidx, bside, bl, bh = r, j, 1, lo[j + 1], hi[i]
        if eq is not None:
            blo = lo[eq + 1]
        elif stack:
            blo = lo[stack[-1] + 1]
        else:
            blo = lo[0]
        r = (hi[i] - blo) / g
        if r < best:
            best, bidx, bside, bl, bh = r, i, -1, blo, hi[i]
        stack.append(i)
    while stack:
        j = stack.pop()
        r = (hi[n - 1] - lo[j + 1]) / (lo[j + 1] - hi[j])
        if r < best:
            best, bidx, bside, bl, bh = r, j, 1, lo[j + 1], hi[n - 1]
    return float(best), int(bidx), bside, float(bl), float(bh)
