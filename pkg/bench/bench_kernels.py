"""Time the compiled and pure-numpy leapfrog / U-turn paths side by side.

    python bench/bench_kernels.py [--rows 100] [--repeat 5]

Both backends run the same inputs; the script also reports the largest
difference between their outputs, which should be at rounding level.
"""

import argparse
import time

import numpy as np

from hmcss import _accel
from hmcss.benchmarks import make_problem
from hmcss.dynamics import PhaseState, leapfrog
from hmcss.samplers import estimate_periods


def _best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_case(label, fn, repeat):
    res = {}
    for flag in (True, False):
        _accel.set_numba_enabled(flag)
        fn()  # warm-up (JIT compile on the first numba call)
        res[flag] = _best_of(fn, repeat)
    _accel.set_numba_enabled(True)
    (t_nb, a), (t_np, b) = res[True], res[False]
    diff = max(float(np.nanmax(np.abs(x - y))) for x, y in zip(a, b))
    print(f"{label:34s} numba {t_nb * 1e3:9.2f} ms   numpy {t_np * 1e3:9.2f} ms   "
          f"speed-up {t_np / t_nb:6.1f}x   max|diff| {diff:.1e}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=100)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    rng = np.random.default_rng(0)

    for name, params in (("banana-ellipse", {"r": 6}), ("shear-frame", {})):
        prob = make_problem(name, **params)
        sys_ = prob.system
        q = prob.sample(rng, args.rows)
        p = sys_.mass.sample(rng, q.shape)
        state = PhaseState(q, p)

        def run_leapfrog():
            out, div = leapfrog(sys_, state, 0.05, 20)
            return out.q, out.p, div.astype(float)

        def run_uturn():
            return (estimate_periods(sys_, state, 0.05),)

        bench_case(f"{name}: leapfrog 20 steps x {args.rows}", run_leapfrog, args.repeat)
        bench_case(f"{name}: U-turn periods x {args.rows}", run_uturn, args.repeat)


if __name__ == "__main__":
    main()
