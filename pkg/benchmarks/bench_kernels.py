#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Covers the hot paths: the semantic scoring scan over a large pool, style
re-rank distances, channel statistics, the resampling interpolators, and
composition. Integer-output kernels are also cross-checked for bit
equality while we are at it.
"""

import argparse
import time

import numpy as np

from domainrag.kernels import available_backends, get_backend


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = {name: get_backend(name) for name in available_backends()}
    if "cython" not in backends:
        print("compiled kernels not built; benchmarking the NumPy backend only")

    rng = np.random.default_rng(0)
    pool = np.ascontiguousarray(rng.normal(size=(120_000, 256)))
    query = np.ascontiguousarray(rng.normal(size=256))
    styles = np.ascontiguousarray(np.abs(rng.normal(size=(120_000, 128))))
    qstyle = np.ascontiguousarray(np.abs(rng.normal(size=128)))
    fmap = np.ascontiguousarray(rng.normal(size=(256, 64, 64)))
    image = np.ascontiguousarray(rng.integers(0, 256, size=(1024, 1536, 3), dtype=np.uint8))
    mask = np.ascontiguousarray(rng.integers(0, 2, size=(1024, 1536)).astype(np.uint8))
    filled = np.ascontiguousarray(rng.integers(0, 256, size=(1024, 1536, 3), dtype=np.uint8))

    cases = {
        "cosine_scores (120k x 256)": lambda k: k.cosine_scores(pool, query),
        "l2_distances (120k x 128)": lambda k: k.l2_distances(styles, qstyle),
        "channel_stats (256 x 64 x 64)": lambda k: k.channel_stats(fmap),
        "resize_bilinear x2 (1024x1536)": lambda k: k.resize_bilinear(image, 2048, 3072, 2, 1),
        "resize_nearest x2 (1024x1536)": lambda k: k.resize_nearest(mask, 2048, 3072, 2, 1),
        "compose (1024x1536)": lambda k: k.compose_pixels(image, mask, filled),
    }

    bit_exact_cases = {"resize_bilinear x2 (1024x1536)", "resize_nearest x2 (1024x1536)",
                       "compose (1024x1536)"}

    name_w = max(len(n) for n in cases)
    header = f"{'kernel':<{name_w}}  " + "".join(f"{b:>12}" for b in backends) + "       ratio"
    print(header)
    print("-" * len(header))
    for case_name, call in cases.items():
        times = {}
        outputs = {}
        for bname, backend in backends.items():
            outputs[bname] = call(backend)
            times[bname] = timeit(lambda: call(backend), args.repeats)
        row = f"{case_name:<{name_w}}  " + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        if "cython" in times and "python" in times:
            row += f"  {times['python'] / times['cython']:>8.2f}x"
            if case_name in bit_exact_cases:
                assert np.array_equal(outputs["python"], outputs["cython"]), case_name
        print(row)
    if "cython" in backends:
        print("\n(integer-output kernels verified bit-identical between backends)")


if __name__ == "__main__":
    main()
