#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the three hot kernels in isolation and a full model-training run
through each backend. Run from the repo root:

    python benchmarks/bench_kernels.py [--panel-units N] [--train-units N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from panelift import _pykernels
from panelift import gbdt, kernels

try:
    from panelift import _ckernels
except ImportError:
    _ckernels = None


def _time(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_ols(n_units, t_periods, rng):
    offsets = np.arange(n_units + 1, dtype=np.int64) * t_periods
    x = rng.standard_normal(n_units * t_periods) + 10.0
    y = 2.0 * x + rng.standard_normal(n_units * t_periods)
    out = {"python": _time(lambda: _pykernels.ols_moments(offsets, x, y))}
    if _ckernels is not None:
        out["c"] = _time(lambda: _ckernels.ols_moments(offsets, x, y))
    return out


def bench_inversions(n, rng):
    v = rng.standard_normal(n)
    out = {"python": _time(lambda: _pykernels.count_inversions(v))}
    if _ckernels is not None:
        out["c"] = _time(lambda: _ckernels.count_inversions(v))
    return out


def bench_split_scan(n, rng):
    xv = rng.standard_normal(n)
    grad = rng.standard_normal(n)
    node_of = rng.integers(0, 8, n).astype(np.int32)
    sort_idx = np.argsort(xv, kind="stable")
    args = (sort_idx, xv, node_of, grad, 8, 20)
    out = {"python": _time(lambda: _pykernels.scan_feature_splits(*args))}
    if _ckernels is not None:
        out["c"] = _time(lambda: _ckernels.scan_feature_splits(*args))
    return out


def bench_training(n, p, n_trees, rng, monkey_module=gbdt):
    X = rng.standard_normal((n, p))
    margin = X[:, 0] + 0.5 * X[:, 1] - 0.3 * X[:, 2] ** 2
    y = (margin + 0.5 * rng.standard_normal(n) > 0).astype(float)

    def run(impl):
        original = monkey_module.kernels.scan_feature_splits
        monkey_module.kernels.scan_feature_splits = impl.scan_feature_splits
        try:
            t0 = time.perf_counter()
            gbdt.boost(X, y, n_trees=n_trees, max_depth=4, min_leaf=20, learning_rate=0.1)
            return time.perf_counter() - t0
        finally:
            monkey_module.kernels.scan_feature_splits = original

    out = {"python": run(_pykernels)}
    if _ckernels is not None:
        out["c"] = run(_ckernels)
    return out


def _row(name, res):
    py = res["python"]
    if "c" in res:
        print(f"{name:<34s} {res['c'] * 1e3:>10.1f} {py * 1e3:>12.1f} {py / res['c']:>9.1f}x")
    else:
        print(f"{name:<34s} {'-':>10s} {py * 1e3:>12.1f} {'-':>10s}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--panel-units", type=int, default=100_000)
    parser.add_argument("--panel-periods", type=int, default=60)
    parser.add_argument("--inversions-n", type=int, default=1_000_000)
    parser.add_argument("--scan-n", type=int, default=1_000_000)
    parser.add_argument("--train-units", type=int, default=50_000)
    parser.add_argument("--train-trees", type=int, default=50)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"active backend: {kernels.get_backend()}")
    if _ckernels is None:
        print("compiled extension not available; timing the fallback only\n")
    print(f"{'kernel':<34s} {'c (ms)':>10s} {'python (ms)':>12s} {'speedup':>10s}")
    _row(
        f"ols_moments {args.panel_units}x{args.panel_periods}",
        bench_ols(args.panel_units, args.panel_periods, rng),
    )
    _row(f"count_inversions n={args.inversions_n}", bench_inversions(args.inversions_n, rng))
    _row(f"scan_feature_splits n={args.scan_n}", bench_split_scan(args.scan_n, rng))
    _row(
        f"boost {args.train_units}x8, {args.train_trees} trees",
        bench_training(args.train_units, 8, args.train_trees, rng),
    )


if __name__ == "__main__":
    main()
