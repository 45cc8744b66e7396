#!/usr/bin/env python3
"""Compare the numba and numpy kernel backends on the hot paths.

Run from the repo root:

    python benchmarks/bench_backends.py [--n 512] [--d 64] [--repeats 5]

Each kernel is timed best-of-N after a warmup call (which also absorbs JIT
compilation for the numba backend). Outputs one table row per kernel and
backend plus the speedup ratio.
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from nmattn import (
    AttentionInputs,
    DenseMatrix,
    SparsityMode,
    backend,
    compress_logical,
    full_attention,
    gemm_scaled,
    nm_attention,
    sddmm_prune,
    softmax_rows,
    spmm,
)


def best_of(fn, repeats: int) -> float:
    fn()  # warmup / JIT
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_cases(n: int, d: int):
    rng = np.random.default_rng(0)
    q = DenseMatrix(rng.standard_normal((n, d)))
    k = DenseMatrix(rng.standard_normal((n, d)))
    v = DenseMatrix(rng.standard_normal((n, d)))
    inputs = AttentionInputs(q, k, v)
    compressed = compress_logical(gemm_scaled(q, k, 1.0 / math.sqrt(d)), SparsityMode.ONE_OF_TWO)
    weights = softmax_rows(compressed)
    return {
        "gemm_scaled": lambda: gemm_scaled(q, k, 1.0 / math.sqrt(d)),
        "sddmm_prune(1:2)": lambda: sddmm_prune(q, k, SparsityMode.ONE_OF_TWO, 1.0),
        "sddmm_prune(2:4)": lambda: sddmm_prune(q, k, SparsityMode.TWO_OF_FOUR, 1.0),
        "softmax_rows": lambda: softmax_rows(compressed),
        "spmm": lambda: spmm(weights, v),
        "nm_attention": lambda: nm_attention(inputs, SparsityMode.ONE_OF_TWO),
        "full_attention": lambda: full_attention(inputs),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=512)
    parser.add_argument("--d", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    timings: dict[str, dict[str, float]] = {}
    backends = []
    for name in ("numba", "numpy"):
        try:
            backend.set_backend(name)
        except ImportError:
            print(f"skipping {name}: not importable")
            continue
        backends.append(name)
        for kernel, fn in build_cases(args.n, args.d).items():
            timings.setdefault(kernel, {})[name] = best_of(fn, args.repeats)

    print(f"\nn={args.n} d={args.d} best of {args.repeats}")
    header = f"{'kernel':<20}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'ratio':>9}"
    print(header)
    print("-" * len(header))
    for kernel, row in timings.items():
        line = f"{kernel:<20}" + "".join(f"{row[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"{row['numpy'] / row['numba']:>8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
