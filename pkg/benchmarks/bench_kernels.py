"""Compare the compiled and pure-Python kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat R] [--sizes N ...]

Both backends get the same pre-drawn inputs; the script checks that their
outputs are identical before reporting timings.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from csdp.kernels import available_backends, fisher_yates_draws
from csdp.plan import build_plan


def shuffle_case(n: int, seed: int):
    draws = fisher_yates_draws(n, np.random.default_rng(seed))

    def run(impl):
        perm = np.arange(n, dtype=np.int64)
        impl.fisher_yates(perm, draws)
        return perm

    return run


def cover_case(n: int, k: int, dim: int, seed: int):
    a = build_plan(n, k).arrays
    vals = np.random.default_rng(seed).standard_normal((int(a["top"].max()) + 1, dim))
    prev = np.ascontiguousarray(a["prev"], dtype=np.int64)
    top = np.ascontiguousarray(a["top"], dtype=np.int64)

    def run(impl):
        out = np.empty((len(prev), dim))
        impl.cover_sums(prev, top, vals, out)
        return out

    return run


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[2**10, 2**14, 2**17])
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend not built; timing the Python fallback only")
    cases = []
    for n in args.sizes:
        cases.append((f"fisher_yates n={n}", shuffle_case(n, 0)))
        cases.append((f"cover_sums n={n} k=2 d=1", cover_case(n, 2, 1, 0)))
        cases.append((f"cover_sums n={n} k=2 d=3", cover_case(n, 2, 3, 0)))

    names = list(backends)
    print(f"{'case':32s}" + "".join(f"{b:>14s}" for b in names) + ("   speedup" if len(names) > 1 else ""))
    for label, run in cases:
        results = {b: run(impl) for b, impl in backends.items()}
        ref = results[names[0]]
        for b in names[1:]:
            if not np.array_equal(results[b], ref):
                raise SystemExit(f"{label}: backends disagree")
        best = {b: min(timeit.repeat(lambda impl=impl: run(impl), number=1, repeat=args.repeat))
                for b, impl in backends.items()}
        row = f"{label:32s}" + "".join(f"{best[b] * 1e3:12.3f}ms" for b in names)
        if len(names) > 1:
            row += f"   {best['python'] / best['cython']:7.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
