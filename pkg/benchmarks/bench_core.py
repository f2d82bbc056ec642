"""Time the compiled core against the numpy fallback on the two hot loops.

Usage: python3 benchmarks/bench_core.py [--grid N] [--samples M] [--repeat R]
"""

import argparse
import time

import numpy as np

from dzm import _pure

try:
    from dzm import _core
except ImportError:
    _core = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def far_sum_case(n, n_targets, rng):
    L = 8.0
    h = 2 * L / n
    g = np.ascontiguousarray(rng.standard_normal((n, n, n, 4)) + 1j * rng.standard_normal((n, n, n, 4)))
    targets = np.ascontiguousarray(rng.uniform(-2, 2, (n_targets, 3)))
    return (targets, L, h, n, g, 4 * h, 8 * h)


def mc_case(samples, rng):
    x = np.ascontiguousarray(rng.standard_normal((samples, 3)) * 3)
    u = np.ascontiguousarray(rng.standard_normal((samples, 3)))
    return (x, u, 1.5, 1.5, 1.0 + 0.1j, 1.0 + 0j, True, 1e-3, 1e4, 1e-3, 1e4)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--targets", type=int, default=8)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)
    cases = {
        "a_kernel_far_sum": far_sum_case(args.grid, args.targets, rng),
        "hs_mc_moments": mc_case(args.samples, rng),
    }
    print(f"{'kernel':<18} {'python [s]':>11} {'cython [s]':>11} {'speedup':>8} {'max rel diff':>13}")
    for name, case in cases.items():
        t_py, ref = best_of(lambda: getattr(_pure, name)(*case), args.repeat)
        if _core is None:
            print(f"{name:<18} {t_py:11.4f} {'n/a':>11} {'n/a':>8} {'n/a':>13}")
            continue
        t_cy, got = best_of(lambda: getattr(_core, name)(*case), args.repeat)
        diff = np.max(np.abs(np.asarray(got) - np.asarray(ref))) / np.max(np.abs(np.asarray(ref)))
        print(f"{name:<18} {t_py:11.4f} {t_cy:11.4f} {t_py / t_cy:8.1f} {diff:13.2e}")


if __name__ == "__main__":
    main()
