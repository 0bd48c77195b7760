"""Time the numba kernels against their numpy fallbacks and check they agree.

    python benchmarks/bench_kernels.py [--n 100000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from gsico import _kernels, fixed_size_kmeans, nns_sort
from gsico.imaging import decode_png, encode_png


def timed(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a, b):
    if isinstance(a, (tuple, list)):
        return len(a) == len(b) and all(same(x, y) for x, y in zip(a, b))
    if hasattr(a, "cells"):
        return np.array_equal(a.cells, b.cells)
    if hasattr(a, "samples"):
        return np.array_equal(a.samples, b.samples)
    if hasattr(a, "clusters"):
        return same(list(a.clusters), list(b.clusters))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    X = rng.normal(size=(args.n, 15))
    C = X[rng.choice(args.n, args.n // 256, replace=False)]
    F = rng.normal(size=(4096, 15))
    side = int(np.sqrt(args.n)) // 16 * 16
    png = encode_png(rng.integers(0, 64, (side, side)), 8)
    small = X[: 256 * 16]

    cases = {
        "nearest_centroid": lambda: _kernels.nearest_centroid(X, C),
        "kmeans++ update x64": lambda: _seed(X, 64),
        "centroid_sums": lambda: _kernels.centroid_sums(X, rng_labels, C.shape[0]),
        "nns_sort 64x64": lambda: nns_sort(F, 64, 64),
        "png unfilter": lambda: decode_png(png),
        "fixed_size_kmeans 4096": lambda: fixed_size_kmeans(small, 0),
    }
    rng_labels = rng.integers(0, C.shape[0], args.n)

    if not _kernels.HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return
    print(f"{'kernel':<24} {'numba s':>9} {'numpy s':>9} {'speedup':>8}  equal")
    for name, fn in cases.items():
        _kernels.USE_NUMBA = True
        fn()  # compile
        t_nb, a = timed(fn, args.repeat)
        _kernels.USE_NUMBA = False
        t_np, b = timed(fn, args.repeat)
        print(f"{name:<24} {t_nb:>9.4f} {t_np:>9.4f} {t_np / t_nb:>8.1f}  {same(a, b)}")
    _kernels.USE_NUMBA = True


def _seed(X, k):
    s = _kernels.SeedingState(X, k)
    for i in range(k):
        s.add(X[i * 7])
    return s.mind2


if __name__ == "__main__":
    main()
