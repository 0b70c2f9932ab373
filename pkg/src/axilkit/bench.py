"""Timing and memory probe for the fit/transform pair."""

from __future__ import annotations

import time
import tracemalloc

import numpy as np

from .axil import axil_fit, axil_transform
from .trainer import Dataset, TrainConfig, leaf_assignments, train_gbm


def _synthetic(n, n_features, rng):
    X = rng.normal(size=(n, n_features))
    y = X @ rng.normal(size=n_features) + 0.5 * np.sin(3 * X[:, 0]) \
        + rng.normal(scale=0.1, size=n)
    return Dataset(X, y)


def _best_time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_bench(sizes=(50, 100, 200, 400), num_trees=10, max_leaves=8,
              n_features=5, repeats=3, seed=0):
    """One row per size with fit/transform seconds and state memory.

    ``expected_bytes`` is the dense state size ``8 (M + 1) N^2``;
    ``peak_bytes`` is the traced allocation peak during the fit.
    """
    rng = np.random.default_rng(seed)
    cfg = TrainConfig(num_trees=num_trees, learning_rate=0.1,
                      max_leaves=max_leaves)
    rows = []
    for n in sizes:
        data = _synthetic(int(n), n_features, rng)
        model = train_gbm(data, cfg)
        leaves = leaf_assignments(model, data.features)
        fit_s = _best_time(lambda: axil_fit(leaves, cfg.learning_rate), repeats)
        state = axil_fit(leaves, cfg.learning_rate)
        tf_s = _best_time(lambda: axil_transform(state, leaves), repeats)
        del state
        tracemalloc.start()
        state = axil_fit(leaves, cfg.learning_rate)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        rows.append({"n": int(n), "trees": num_trees, "fit_seconds": fit_s,
                     "transform_seconds": tf_s, "peak_bytes": int(peak),
                     "state_bytes": state.nbytes(),
                     "expected_bytes": 8 * (num_trees + 1) * int(n) ** 2})
    return rows


def loglog_slope(rows, key="fit_seconds"):
    n = np.log([r["n"] for r in rows])
    t = np.log([r[key] for r in rows])
    return float(np.polyfit(n, t, 1)[0])
