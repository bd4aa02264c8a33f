"""Compiled vs pure-Python thickness kernels.

    python benchmarks/bench_thickness.py [--repeat 3]

Both backends must agree on every value; the script exits non-zero otherwise.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from wanderlab.cantor import _fallback

try:
    from wanderlab.cantor import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(0)
    cases = [(f"tent m={m} depth={d}", lambda mod, m=m, d=d: mod.tent_stream_thickness(m, d)[0])
             for m, d in ((3, 8), (3, 14), (4, 10), (6, 6))]
    for n in (2_000, 20_000):
        lo = np.sort(rng.uniform(0, 1, n))
        hi = lo + rng.uniform(0, 0.5 / n, n)
        cases.append((f"sorted n={n}", lambda mod, lo=lo, hi=hi: mod.sorted_thickness(lo, hi)[0]))

    print(f"{'case':<22}{'python s':>12}{'compiled s':>12}{'speedup':>10}")
    for name, run in cases:
        tp, vp = best_of(lambda: run(_fallback), args.repeat)
        tc, vc = best_of(lambda: run(_kernels), args.repeat)
        if not np.isclose(vp, vc, rtol=1e-12, atol=0):
            raise SystemExit(f"{name}: backends disagree ({vp!r} vs {vc!r})")
        print(f"{name:<22}{tp:>12.4f}{tc:>12.4f}{tp / tc:>10.1f}")


if __name__ == "__main__":
    main()
