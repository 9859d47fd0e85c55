#!/usr/bin/env python3
"""Benchmark the compiled tree kernels against the pure NumPy fallback.

Builds the same forest with both implementations, verifies the outputs are
bit-identical, and reports wall-clock times for training and batch scoring.

Usage: python benchmarks/bench_forest.py [--samples N] [--features F]
       [--trees M] [--score-rows K]
"""

import argparse
import time

import numpy as np

from entrospect.kernels import pure

try:
    from entrospect.kernels import _speedups as compiled
except ImportError:
    compiled = None


def make_dataset(n_samples, n_features, seed=7):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_samples, n_features))
    X[:, : n_features // 2] = np.round(X[:, : n_features // 2] * 2) / 2
    logits = X[:, 0] - 0.5 * X[:, 1] + 0.3 * rng.normal(size=n_samples)
    y = (logits > 0).astype(np.uint8)
    return X, y


def run_forest(impl, X, y, n_trees, subset, seed):
    rng = np.random.default_rng(seed)
    n = len(X)
    trees = []
    for _ in range(n_trees):
        rows = rng.integers(0, n, size=n, dtype=np.int64)
        kernel_seed = int(rng.integers(0, 2**64, dtype=np.uint64))
        trees.append(impl.build_tree(X, y, rows, subset, 1, -1, kernel_seed))
    return trees


def score_forest(impl, trees, X):
    return np.vstack([impl.predict_tree(*t[:5], X) for t in trees])


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=2000)
    parser.add_argument("--features", type=int, default=28)
    parser.add_argument("--trees", type=int, default=50)
    parser.add_argument("--score-rows", type=int, default=20000)
    parser.add_argument("--subset", type=int, default=6)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    X, y = make_dataset(args.samples, args.features, args.seed)
    X_score, _ = make_dataset(args.score_rows, args.features, args.seed + 1)

    implementations = [("pure", pure)]
    if compiled is not None:
        implementations.append(("compiled", compiled))
    else:
        print("compiled kernels not built; benchmarking the fallback only")

    results = {}
    for name, impl in implementations:
        t0 = time.perf_counter()
        trees = run_forest(impl, X, y, args.trees, args.subset, args.seed)
        t_build = time.perf_counter() - t0
        t0 = time.perf_counter()
        preds = score_forest(impl, trees, X_score)
        t_score = time.perf_counter() - t0
        results[name] = (trees, preds, t_build, t_score)
        print(
            f"{name:9s} build {args.trees} trees on {args.samples}x{args.features}: "
            f"{t_build:8.3f}s   score {args.score_rows} rows: {t_score:8.3f}s"
        )

    if len(results) == 2:
        pure_trees, pure_preds, pb, ps = results["pure"]
        comp_trees, comp_preds, cb, cs = results["compiled"]
        for tp, tc in zip(pure_trees, comp_trees):
            for arr_p, arr_c in zip(tp, tc):
                assert np.array_equal(arr_p, arr_c), "kernel outputs diverge"
        assert np.array_equal(pure_preds, comp_preds), "predictions diverge"
        print(
            f"outputs bit-identical; speedup: build x{pb / cb:.1f}, score x{ps / cs:.1f}"
        )


if __name__ == "__main__":
    main()
