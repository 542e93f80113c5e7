"""Compare the compiled and NumPy kernel backends.

Times ``row_products``, ``accumulate`` and ``jvp`` on batches shaped like a
policy update (a few hundred transitions over a 3-mode grid), checks that
both backends agree, and prints a table of median timings and speedups.

    python3 benchmarks/bench_kernels.py [--n 400] [--rank 4] [--repeat 200]
"""

import argparse
import timeit

import numpy as np

from tlrl._kernels import backends


def make_problem(dims, rank, n, seed=0):
    rng = np.random.default_rng(seed)
    factors = tuple(rng.uniform(-1, 1, size=(d, rank)) for d in dims)
    idx = np.stack([rng.integers(0, d, size=n) for d in dims], axis=1)
    weights = rng.standard_normal((n, rank))
    tangents = tuple(rng.standard_normal(f.shape) for f in factors)
    return factors, idx, weights, tangents


def cases(mod, factors, idx, weights, tangents):
    def acc():
        grads = [np.zeros_like(f) for f in factors]
        mod.accumulate(factors, idx, weights, grads)
        return grads

    return {
        "row_products": lambda: mod.row_products(factors, idx),
        "accumulate": acc,
        "jvp": lambda: mod.jvp(factors, tangents, idx),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", default="20,20,3")
    ap.add_argument("--rank", type=int, default=4)
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    dims = [int(v) for v in args.dims.split(",")]
    problem = make_problem(dims, args.rank, args.n)
    mods = backends()
    if "cython" not in mods:
        print("compiled backend not built; only the NumPy backend is available")

    results = {}
    for name, mod in mods.items():
        for op, fn in cases(mod, *problem).items():
            t = timeit.repeat(fn, number=1, repeat=args.repeat)
            results[(name, op)] = (np.median(t), fn())

    print(f"dims={dims} K={args.rank} n={args.n} repeat={args.repeat}")
    print(f"{'kernel':<14}{'python us':>12}{'cython us':>12}{'speedup':>10}{'max diff':>12}")
    for op in ("row_products", "accumulate", "jvp"):
        tp, outp = results[("python", op)]
        if ("cython", op) in results:
            tc, outc = results[("cython", op)]
            a = np.concatenate([np.ravel(x) for x in (outp if isinstance(outp, list) else [outp])])
            b = np.concatenate([np.ravel(x) for x in (outc if isinstance(outc, list) else [outc])])
            diff = float(np.max(np.abs(a - b)))
            print(f"{op:<14}{tp * 1e6:>12.1f}{tc * 1e6:>12.1f}{tp / tc:>10.2f}{diff:>12.2e}")
        else:
            print(f"{op:<14}{tp * 1e6:>12.1f}{'-':>12}{'-':>10}{'-':>12}")


if __name__ == "__main__":
    main()
