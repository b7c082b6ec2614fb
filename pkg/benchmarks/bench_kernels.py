#!/usr/bin/env python3
"""Compare the compiled kernels against the numpy fallback.

Times the two per-epoch hot loops (k-reciprocal Jaccard matrix, DBSCAN
label propagation) on synthetic data of growing size and verifies both
backends return identical results.

Usage: python benchmarks/bench_kernels.py [n1 n2 ...]
"""

import sys
import time

import numpy as np

from veripair import kernels
from veripair.clustering import knn_lists, reciprocal_membership


def timed(fn, repeats=3):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def bench(n, k=30, eps=0.55, min_pts=4, seed=0):
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((n, 32))
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    neighbors = knn_lists(feats, k)
    recip = reciprocal_membership(neighbors, k)

    rows = []
    t_np, d_np = timed(lambda: kernels.jaccard_from_reciprocal(recip, backend="numpy"))
    t_cy, d_cy = timed(lambda: kernels.jaccard_from_reciprocal(recip, backend="cython"))
    assert np.array_equal(d_np, d_cy), "jaccard backends disagree"
    rows.append(("jaccard", t_np, t_cy))

    adj = d_np <= eps
    core = adj.sum(axis=1) >= min_pts
    t_np, l_np = timed(lambda: kernels.dbscan_from_adjacency(adj, core, backend="numpy"))
    t_cy, l_cy = timed(lambda: kernels.dbscan_from_adjacency(adj, core, backend="cython"))
    assert np.array_equal(l_np, l_cy), "dbscan backends disagree"
    rows.append(("dbscan", t_np, t_cy))
    return rows


def main(argv):
    sizes = [int(a) for a in argv[1:]] or [500, 1000, 2000]
    if "cython" not in kernels.available_backends():
        print("compiled extension not built; nothing to compare")
        return 1
    print(f"{'n':>6} {'kernel':<8} {'numpy':>10} {'cython':>10} {'speedup':>8}")
    for n in sizes:
        for name, t_np, t_cy in bench(n):
            print(f"{n:>6} {name:<8} {t_np * 1e3:>8.1f}ms {t_cy * 1e3:>8.1f}ms "
                  f"{t_np / t_cy:>7.1f}x")
    print("backends agree bitwise on all runs")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
