"""Compiled vs numpy kernels, and the two solver paths that use them.

Run with ``python benchmarks/bench_kernels.py``; the numpy numbers are always
measured, the compiled ones only when the extension is built.
"""
import argparse
import timeit

import numpy as np

from hohomog import _fallback, solvers

try:
    from hohomog import _kernels as compiled
except ImportError:
    compiled = None


def cases(n):
    rng = np.random.default_rng(0)
    f = rng.standard_normal(n)
    c = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    y = rng.random(n // 16)
    kern = rng.random(33)
    return {
        "cumulative_simpson": lambda m: m.cumulative_simpson(f, 1e-3),
        "trig_eval": lambda m: m.trig_eval(c, 0.0, y, 1),
        "line_convolve": lambda m: m.line_convolve(f, kern),
    }


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2**18)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<22}{'numpy [ms]':>12}{'compiled [ms]':>15}{'speedup':>10}")
    for name, fn in cases(args.n).items():
        t_np = best(lambda: fn(_fallback), args.repeat)
        if compiled is None:
            print(f"{name:<22}{1e3 * t_np:>12.2f}{'-':>15}{'-':>10}")
            continue
        t_c = best(lambda: fn(compiled), args.repeat)
        print(f"{name:<22}{1e3 * t_np:>12.2f}{1e3 * t_c:>15.2f}{t_np / t_c:>10.1f}")
    a = lambda y: 2 + np.cos(2 * np.pi * y)
    t = best(lambda: solvers.exact_kernel_solution_1d(a, 1 / 256, 2, (1, 1, 0, 0)), args.repeat)
    print(f"kernel solution, eps=1/256, m=2 (active backend): {1e3 * t:.1f} ms")


if __name__ == "__main__":
    main()
