#!/usr/bin/env python3
"""Time the compiled kernels against their numpy twins.

Runs every kernel at a few input sizes, reports best-of-N wall time for
each implementation and the speedup of the compiled path.  Exits 1 when
the compiled module is not importable, since then there is nothing to
compare.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sizes 1000,100000 --repeats 7
"""

import argparse
import sys
import timeit

import numpy as np

from plotsearch.kernels import _ref

try:
    from plotsearch.kernels import _fastk
except ImportError:
    _fastk = None


def make_cases(size, rng):
    surprisal = rng.normal(4.0, 1.5, size)
    series = np.cumsum(rng.normal(0.0, 0.1, size)) + np.sin(
        np.linspace(0.0, 40.0, size)
    )
    # cosine kernel is quadratic in rows; cap rows so big sizes stay sane
    n_vec = min(max(int(np.sqrt(size)), 2), 512)
    vectors = rng.normal(0.0, 1.0, (n_vec, 64))
    q = rng.uniform(0.0, 1.0, size)
    n_edge = rng.integers(0, 50, size).astype(np.float64)
    window = max(2, size // 50)
    return [
        ("interest_curve", (surprisal, 4.0, 1.5)),
        ("band_fraction", (surprisal, 4.0, 1.5)),
        ("moving_average", (series, window)),
        ("peak_indices", (series, 0.01)),
        ("pairwise_cosine_mean_std", (vectors,)),
        ("ucb_scores", (q, n_edge, float(n_edge.sum()), 1.414)),
    ]


def best_time(fn, args, repeats):
    loops = 1
    while timeit.timeit(lambda: fn(*args), number=loops) < 0.01:
        loops *= 4
    runs = timeit.repeat(lambda: fn(*args), number=loops, repeat=repeats)
    return min(runs) / loops


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="1000,10000,100000",
                        help="comma-separated input lengths")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats, best is kept")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if _fastk is None:
        print("compiled kernel module is not importable; nothing to compare",
              file=sys.stderr)
        return 1

    rng = np.random.default_rng(args.seed)
    sizes = [int(s) for s in args.sizes.split(",")]

    header = f"{'kernel':<26} {'size':>8} {'numpy':>12} {'compiled':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for size in sizes:
        for name, call_args in make_cases(size, rng):
            ref_fn = getattr(_ref, name)
            fast_fn = getattr(_fastk, name)
            check_ref = ref_fn(*call_args)
            check_fast = fast_fn(*call_args)
            np.testing.assert_allclose(check_fast, check_ref, rtol=1e-12, atol=1e-12)
            t_ref = best_time(ref_fn, call_args, args.repeats)
            t_fast = best_time(fast_fn, call_args, args.repeats)
            print(f"{name:<26} {size:>8} {t_ref * 1e6:>10.1f}us "
                  f"{t_fast * 1e6:>10.1f}us {t_ref / t_fast:>7.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
