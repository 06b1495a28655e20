"""Seeded synthetic datasets; every row is returned inside the unit ball."""
from __future__ import annotations

import numpy as np

from .dataset import Dataset, normalize_rows

__all__ = ["gaussian_blobs", "linear_regression"]


def gaussian_blobs(n=1000, d=10, classes=2, subclusters=1, spread=0.15, separation=1.0,
                   cluster_spread=0.6, imbalance=None, seed=0) -> Dataset:
    """Class-conditional Gaussian mixture.

    Each class owns ``subclusters`` tight components (std ``spread``)
    scattered with std ``cluster_spread`` around a class center placed at
    distance ``separation`` from the origin. ``imbalance`` gives per-class
    proportions (default uniform). Rows are shrunk into the unit ball.
    """
    rng = np.random.default_rng(seed)
    props = np.full(classes, 1.0 / classes) if imbalance is None else np.asarray(imbalance, dtype=float)
    props = props / props.sum()
    counts = np.floor(props * n).astype(int)
    counts[: n - counts.sum()] += 1
    if np.any(counts == 0):
        raise ValueError("every class needs at least one point")
    centers = rng.standard_normal((classes, d))
    centers *= separation / np.linalg.norm(centers, axis=1, keepdims=True)
    X, y = [], []
    for c, m in enumerate(counts):
        subs = centers[c] + cluster_spread * rng.standard_normal((subclusters, d)) / np.sqrt(d)
        which = rng.integers(subclusters, size=m)
        X.append(subs[which] + spread * rng.standard_normal((m, d)) / np.sqrt(d))
        y.append(np.full(m, c))
    X, y = np.vstack(X), np.concatenate(y)
    perm = rng.permutation(n)
    scale = np.max(np.linalg.norm(X, axis=1))
    ds = Dataset(X[perm] / max(scale, 1.0), y[perm], meta={"source": "gaussian_blobs", "seed": seed})
    return normalize_rows(ds)


def linear_regression(n=200, d=5, noise=0.1, seed=0) -> Dataset:
    """``y = <x, w_true> + noise`` with ``x`` uniform in the unit ball."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    X *= rng.random(n)[:, None] ** (1.0 / d)
    w_true = rng.standard_normal(d)
    y = X @ w_true + noise * rng.standard_normal(n)
    ds = Dataset(X, y, task="regression", meta={"source": "linear_regression", "seed": seed})
    return normalize_rows(ds)
