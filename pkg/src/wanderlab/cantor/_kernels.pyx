# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled thickness kernels.

Positions of tent-coordinate leaves are kept exact as 128-bit integer numerators
over the common denominator (2^m - 1) * 2^zmax.
"""
from libc.math cimport sin, M_PI, INFINITY
from libc.stdlib cimport malloc, realloc, free

import numpy as np

cdef extern from * nogil:
    """
    typedef __int128 wl_i128;
    static inline double wl_to_double(wl_i128 v) { return (double)v; }
    static inline long long wl_hi(wl_i128 v) { return (long long)(v >> 64); }
    static inline unsigned long long wl_lo(wl_i128 v) { return (unsigned long long)v; }
    """
    ctypedef long long wl_i128
    double wl_to_double(wl_i128 v)
    long long wl_hi(wl_i128 v)
    unsigned long long wl_lo(wl_i128 v)


cdef object _pyint(wl_i128 v):
    return (int(wl_hi(v)) << 64) + int(wl_lo(v))


cdef struct GapEntry:
    double gx          # gap length in the measuring coordinate
    double smid        # sin(pi * midpoint) of the gap (x mode)
    wl_i128 left       # left end of the gap
    wl_i128 right      # right end of the gap


cdef inline double small_sin(double x) nogil:
    # Taylor series to x^9 is exact to rounding for |x| < 0.01
    cdef double x2
    if x < 0.01:
        x2 = x * x
        return x * (1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0))))
    return sin(x)


cdef inline double xlen(wl_i128 a, wl_i128 b, double inv_den) nogil:
    # |2cos(pi a) - 2cos(pi b)| for tent positions a < b
    cdef double mid = wl_to_double(a + b) * 0.5 * inv_den
    cdef double half = wl_to_double(b - a) * 0.5 * inv_den
    return 4.0 * sin(M_PI * mid) * small_sin(M_PI * half)


def tent_stream_thickness(int m, int depth, bint x_coords=True):
    """Thickness of the depth-`depth` cover of the tent-coordinate u-set (x_coords=False)
    or of its image under t -> 2cos(pi t) (x_coords=True), by a single streaming pass.

    Returns (ratio, den, gap_lo, gap_hi, bridge_lo, bridge_hi, side, n_gaps) with
    positions as integer numerators over `den`.
    """
    if m < 3 or depth < 1:
        raise ValueError("need m >= 3 and depth >= 1")
    cdef int zmax = depth * (m - 1)
    if zmax + m + 2 > 124:
        raise OverflowError("positions do not fit in 128 bits")
    cdef wl_i128 one = 1
    cdef wl_i128 q = (one << m) - 1
    cdef wl_i128 den = q << zmax
    cdef double inv_den = 1.0 / wl_to_double(den)
    cdef double pi2 = 2.0 * M_PI * M_PI

    # DFS state per level
    cdef wl_i128* cs = <wl_i128*> malloc((depth + 1) * sizeof(wl_i128))
    cdef int* sg = <int*> malloc((depth + 1) * sizeof(int))
    cdef int* zs = <int*> malloc((depth + 1) * sizeof(int))
    cdef int* nxt = <int*> malloc((depth + 1) * sizeof(int))
    cdef int cap = 4096
    cdef GapEntry* st = <GapEntry*> malloc(cap * sizeof(GapEntry))
    cdef int top = 0
    cdef int lvl, z, sgn
    cdef wl_i128 c, lo, hi, prev_hi = -1, w
    cdef wl_i128 hull_lo = 2 * (one << zmax)
    cdef wl_i128 hull_hi = (q - 1) << zmax
    cdef long long n_gaps = 0
    cdef double best = INFINITY, gx, smid, ratio, bt, lb, dtg
    cdef wl_i128 bg_l = 0, bg_r = 0, bb_l = 0, bb_r = 0
    cdef int bside = 0
    cdef GapEntry e, popped
    cdef bint have_eq

    cs[0] = 0
    sg[0] = 1
    zs[0] = 0
    nxt[0] = 0
    lvl = 0
    # child order: sg=+1 -> z = m-1 .. 1 ; sg=-1 -> z = 1 .. m-1
    with nogil:
        while lvl >= 0:
            if nxt[lvl] >= m - 1:
                lvl -= 1
                continue
            if sg[lvl] > 0:
                z = m - 1 - nxt[lvl]
            else:
                z = 1 + nxt[lvl]
            nxt[lvl] += 1
            sgn = sg[lvl]
            # child offset: c + sgn * 2^-(Z+z-1)
            c = cs[lvl] + sgn * (q << (zmax - (zs[lvl] + z - 1)))
            if lvl + 1 < depth:
                cs[lvl + 1] = c
                sg[lvl + 1] = -sgn
                zs[lvl + 1] = zs[lvl] + z
                nxt[lvl + 1] = 0
                lvl += 1
                continue
            # leaf: c + sgn' * 2^-Z' * [2, q-1] / q  with sgn' = -sgn, Z' = Z + z
            w = one << (zmax - zs[lvl] - z)
            if -sgn > 0:
                lo = c + 2 * w
                hi = c + (q - 1) * w
            else:
                lo = c - (q - 1) * w
                hi = c - 2 * w
            if prev_hi >= 0:
                n_gaps += 1
                dtg = wl_to_double(lo - prev_hi) * inv_den
                if x_coords:
                    smid = sin(M_PI * wl_to_double(lo + prev_hi) * 0.5 * inv_den)
                    gx = 4.0 * smid * small_sin(M_PI * 0.5 * dtg)
                else:
                    smid = 1.0
                    gx = dtg
                have_eq = False
                while top > 0 and st[top - 1].gx <= gx:
                    popped = st[top - 1]
                    top -= 1
                    if popped.gx == gx:
                        have_eq = True
                    # right bridge of popped: [popped.right, prev_hi]
                    bt = wl_to_double(prev_hi - popped.right) * inv_den
                    if x_coords:
                        lb = bt * (popped.gx / (wl_to_double(popped.right - popped.left) * inv_den)
                                   - pi2 * (bt + wl_to_double(popped.right - popped.left) * inv_den))
                        if lb < best * popped.gx:
                            ratio = xlen(popped.right, prev_hi, inv_den) / popped.gx
                        else:
                            ratio = INFINITY
                    else:
                        ratio = bt / popped.gx
                    if ratio < best:
                        best = ratio
                        bg_l = popped.left
                        bg_r = popped.right
                        bb_l = popped.right
                        bb_r = prev_hi
                        bside = 1
                # left bridge of the new gap
                if have_eq:
                    w = popped.right
                elif top > 0:
                    w = st[top - 1].right
                else:
                    w = hull_lo
                bt = wl_to_double(prev_hi - w) * inv_den
                if x_coords:
                    lb = bt * (gx / dtg - pi2 * (bt + dtg))
                    if lb < best * gx:
                        ratio = xlen(w, prev_hi, inv_den) / gx
                    else:
                        ratio = INFINITY
                else:
                    ratio = bt / gx
                if ratio < best:
                    best = ratio
                    bg_l = prev_hi
                    bg_r = lo
                    bb_l = w
                    bb_r = prev_hi
                    bside = -1
                if top == cap:
                    cap *= 2
                    st = <GapEntry*> realloc(st, cap * sizeof(GapEntry))
                e.gx = gx
                e.smid = smid
                e.left = prev_hi
                e.right = lo
                st[top] = e
                top += 1
            prev_hi = hi
        # remaining entries extend to the hull end
        while top > 0:
            popped = st[top - 1]
            top -= 1
            if x_coords:
                ratio = xlen(popped.right, hull_hi, inv_den) / popped.gx
            else:
                ratio = wl_to_double(hull_hi - popped.right) * inv_den / popped.gx
            if ratio < best:
                best = ratio
                bg_l = popped.left
                bg_r = popped.right
                bb_l = popped.right
                bb_r = hull_hi
                bside = 1
    free(cs); free(sg); free(zs); free(nxt); free(st)
    return (best, _pyint(den), _pyint(bg_l), _pyint(bg_r), _pyint(bb_l), _pyint(bb_r),
            bside, n_gaps)


def sorted_thickness(double[::1] lo, double[::1] hi):
    """Thickness of a finite cover given as sorted disjoint intervals [lo_i, hi_i].

    Returns (ratio, gap_index, side, bridge_lo, bridge_hi); side is -1 for the
    bridge left of the gap and +1 for the bridge right of it.
    """
    cdef Py_ssize_t n = lo.shape[0]
    if n < 2:
        raise ValueError("need at least two intervals")
    cdef Py_ssize_t i, j, top = 0, k
    cdef long[::1] st = np.empty(n, dtype=np.int_)
    cdef double best = INFINITY, g, r, blo, bhi
    cdef Py_ssize_t bidx = -1, jj
    cdef int bside = 0
    cdef double bl = 0.0, bh = 0.0
    cdef bint eq
    with nogil:
        for i in range(n - 1):
            g = lo[i + 1] - hi[i]
            eq = False
            jj = -1
            while top > 0 and lo[st[top - 1] + 1] - hi[st[top - 1]] <= g:
                j = st[top - 1]
                top -= 1
                if lo[j + 1] - hi[j] == g:
                    eq = True
                    jj = j
                r = (hi[i] - lo[j + 1]) / (lo[j + 1] - hi[j])
                if r < best:
                    best = r; bidx = j; bside = 1; bl = lo[j + 1]; bh = hi[i]
            if eq:
                blo = lo[jj + 1]
            elif top > 0:
                blo = lo[st[top - 1] + 1]
            else:
                blo = lo[0]
            r = (hi[i] - blo) / g
            if r < best:
                best = r; bidx = i; bside = -1; bl = blo; bh = hi[i]
            st[top] = i
            top += 1
        while top > 0:
            j = st[top - 1]
            top -= 1
            r = (hi[n - 1] - lo[j + 1]) / (lo[j + 1] - hi[j])
            if r < best:
                best = r; bidx = j; bside = 1; bl = lo[j + 1]; bh = hi[n - 1]
    return best, int(bidx), bside, bl, bh
