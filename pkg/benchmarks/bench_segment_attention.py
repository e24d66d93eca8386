"""Benchmark the packed GQA cross-attention backends.

Compares the compiled Cython kernel against the numpy fallback across
pack shapes that bracket the desk and paper-scale regimes: many small
members (per-member python overhead dominates) through a few large
members (BLAS dominates).

Run:  python3 benchmarks/bench_segment_attention.py [--dtype float32]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from slidelm import _kernels as kernels

CASES = [
    # (label, n_members, tiles/member, H, G, K, dh)
    ("many tiny members", 256, 16, 8, 2, 32, 8),
    ("desk pack", 20, 200, 8, 2, 32, 8),
    ("few large members", 4, 4096, 8, 2, 32, 8),
    ("paper-ish heads", 16, 512, 16, 4, 64, 16),
]


def bench(fn,*args, repeats: int = 7) -> float:
    fn(*args)  # warm up
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dtype", default="float64", choices=["float32", "float64"])
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()
    dtype = np.float32 if args.dtype == "float32" else np.float64

    backends = kernels.available_backends()
    if len(backends) < 2:
        print("compiled kernel not built; benchmarking numpy fallback only")

    rng = np.random.default_rng(0)
    header = f"{'case':>20s} {'shape':>24s}" + "".join(
        f" {b + ' fwd':>12s} {b + ' bwd':>12s}" for b in backends)
    print(header)
    print("-" * len(header))
    for label, members, tiles, H, G, K, dh in CASES:
        offsets = np.arange(members + 1, dtype=np.int64) * tiles
        T = int(offsets[-1])
        q = rng.standard_normal((H, K, dh)).astype(dtype)
        k = rng.standard_normal((G, T, dh)).astype(dtype)
        v = rng.standard_normal((G, T, dh)).astype(dtype)
        g = rng.standard_normal((members, H, K, dh)).astype(dtype)
        scale = 1.0 / np.sqrt(dh)
        row = f"{label:>20s} {f'{members}x{tiles}t H{H}/G{G}':>24s}"
        for backend in backends:
            kernels.use_backend(backend)
            fwd = bench(kernels.segment_attention_forward, q, k, v, offsets, scale,
                        repeats=args.repeats)
            _, attn = kernels.segment_attention_forward(q, k, v, offsets, scale)
            bwd = bench(kernels.segment_attention_backward, g, q, k, v, attn,
                        offsets, scale, repeats=args.repeats)
            row += f" {fwd * 1e3:>10.2f}ms {bwd * 1e3:>10.2f}ms"
        print(row)
    kernels.use_backend(backends[0])


if __name__ == "__main__":
    main()
