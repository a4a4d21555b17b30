"""Compare the numba and numpy orbit kernels on the maps of the construction.

    python3 benchmarks/bench_kernels.py [--points 1000000] [--iters 10] [--bins 256]

Prints wall-clock per backend (after a warm-up call that triggers compilation)
and the largest disagreement between the two backends.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from endolab import kernels
from endolab.maps import build_A, build_destroyer, construction, perturb_map
from endolab.params import MapParams


def timed(fn, repeat=3):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=1_000_000)
    ap.add_argument("--iters", type=int, default=10)
    ap.add_argument("--bins", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    params = MapParams()
    con = construction(params)
    maps = [build_A(), con.f, con.h, build_destroyer(params), perturb_map(con.h, 1e-3, 0)]
    rng = np.random.default_rng(0)
    x, y = rng.random(args.points), rng.random(args.points)

    print(f"{'map':<10} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'max |lift diff|':>16} {'bins differ':>12}")
    for m in maps:
        res = {}
        for backend in ("numpy", "numba"):
            kernels.set_backend(backend)
            kernels.iterate_bin(m, x[:16], y[:16], 1, 8)  # compile / warm caches
            t, hits = timed(lambda: kernels.iterate_bin(m, x, y, args.iters, args.bins), args.repeat)
            res[backend] = (t, hits, kernels.lift_points(m, x[:100_000], y[:100_000]))
        diff = float(np.max(np.abs(res["numpy"][2] - res["numba"][2])))
        nbins = int(np.sum(res["numpy"][1] != res["numba"][1]))
        tn, tb = res["numpy"][0], res["numba"][0]
        print(f"{m.name:<10} {tn:>10.3f} {tb:>10.3f} {tn / tb:>8.2f} {diff:>16.3e} {nbins:>12d}")
    kernels.set_backend("numba")


if __name__ == "__main__":
    main()
