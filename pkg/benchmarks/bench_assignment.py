"""Compiled vs pure-numpy exact assignment on random squared-distance costs.

Run with ``python3 benchmarks/bench_assignment.py [--sizes 128 256 512] [--repeat 3]``.
The compiled kernel is warmed up once so JIT compilation is not timed.
"""

import argparse
import time

import numpy as np

from sbgsc._accel import HAVE_NUMBA
from sbgsc.analysis.assignment import _sap_numba, _sap_numpy
from sbgsc.analysis.wasserstein import sq_dist_matrix


def best_of(fn, cost, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(cost)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[128, 256, 512])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy path can run")
    rng = np.random.default_rng(0)
    _sap_numba(sq_dist_matrix(rng.standard_normal((8, 2)), rng.standard_normal((8, 2))))
    print(f"{'n':>6} {'numpy [s]':>12} {'numba [s]':>12} {'speedup':>9}  same")
    for n in args.sizes:
        cost = sq_dist_matrix(rng.standard_normal((n, 2)), rng.standard_normal((n, 2)))
        t_np, p_np = best_of(_sap_numpy, cost, args.repeat)
        t_nb, p_nb = best_of(_sap_numba, cost, args.repeat)
        same = bool(np.isclose(cost[np.arange(n), p_np].sum(), cost[np.arange(n), p_nb].sum()))
        print(f"{n:>6} {t_np:>12.4f} {t_nb:>12.4f} {t_np / t_nb:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
