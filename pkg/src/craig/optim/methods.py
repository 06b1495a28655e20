"""Incremental-gradient epochs on the full data or on a weighted coreset.

A coreset is treated as the function family ``g_j = gamma_j f_j``. Every
method moves the parameters by roughly ``alpha_k * sum_j g_j`` per epoch,
so learning rates carry over between full-data and coreset runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..coreset import Coreset
from ..dataset import Dataset
from .losses import LossModel
from .schedules import Schedule

__all__ = [
    "Source",
    "as_source",
    "TrainRun",
    "project",
    "ig_epoch",
    "sgd_epoch",
    "svrg_epoch",
    "saga_epoch",
    "METHODS",
]


@dataclass
class Source:
    """Rows to iterate over, in visiting order, with their weights."""

    X: np.ndarray
    y: np.ndarray
    gamma: np.ndarray
    index: np.ndarray

    def __len__(self):
        return len(self.index)

    @property
    def key(self):
        return (len(self.index), hash(self.index.tobytes()), hash(self.gamma.tobytes()))


def as_source(obj, ds: Dataset) -> Source:
    """Full dataset (unit weights, index order) or coreset (greedy order)."""
    if isinstance(obj, Source):
        return obj
    if isinstance(obj, Coreset):
        idx = obj.order
        if idx.size and idx.max() >= ds.n:
            raise IndexError("coreset index out of range for this dataset")
        gamma = obj.weights.astype(np.float64)
    elif isinstance(obj, Dataset) or obj is None:
        idx = np.arange(ds.n)
        gamma = np.ones(ds.n)
    else:
        raise TypeError(f"cannot iterate over {type(obj).__name__}")
    return Source(ds.rows(idx), np.asarray(ds.labels)[idx], gamma, np.asarray(idx, dtype=np.int64))


def project(w, radius):
    """Euclidean projection onto the ball of the given radius."""
    if radius is None:
        return w
    nrm = float(np.linalg.norm(w))
    if nrm > radius:
        w = w * (radius / nrm)
        # rounding can leave the norm a hair above the radius
        while np.linalg.norm(w) > radius:
            w = w * (1.0 - 2.0**-52)
    return w


@dataclass
class TrainRun:
    """Optimizer state. Epoch functions update it in place and return it."""

    w: np.ndarray
    schedule: Schedule
    epoch: int = 0
    grad_evals: int = 0
    radius: float | None = None
    iterates: list = field(default_factory=list)
    log: list = field(default_factory=list)
    cache: dict = field(default_factory=dict)
    model: object = None

    def __post_init__(self):
        self.w = np.array(self.w, dtype=np.float64)
        if self.radius is not None:
            if self.radius <= 0:
                raise ValueError("projection radius must be positive")
            self.w = project(self.w, self.radius)
        if not self.iterates:
            self.iterates.append(self.w.copy())

    @classmethod
    def zeros(cls, d, schedule, **kw):
        return cls(np.zeros(d), schedule, **kw)

    def _finish(self, evals):
        self.grad_evals += evals
        self.epoch += 1
        self.iterates.append(self.w.copy())
        return self


def _batches(k, batch):
    return [np.arange(lo, min(lo + batch, k)) for lo in range(0, k, batch)]


def ig_epoch(run: TrainRun, source, ds: Dataset, loss: LossModel, batch=1) -> TrainRun:
    """One pass over ``source`` in order: ``w -= alpha_k gamma_j grad f_j(w)``.

    With ``batch > 1`` consecutive elements are grouped and one step uses
    ``sum_j gamma_j grad f_j(w)`` over the group.
    """
    src = as_source(source, ds)
    if batch < 1:
        raise ValueError("batch must be >= 1")
    alpha = run.schedule.rate(run.epoch)
    w = run.w
    if alpha != 0.0:
        for b in _batches(len(src), batch):
            g = loss.weighted_grad_sum(w, src.X[b], src.y[b], src.gamma[b])
            w = project(w - alpha * g, run.radius)
    run.w = w
    return run._finish(len(src))


def sgd_epoch(run: TrainRun, source, ds: Dataset, loss: LossModel, batch=1, seed=0) -> TrainRun:
    """``ceil(k/batch)`` steps on independently drawn minibatches.

    Minibatches are sampled with replacement across steps (members of one
    minibatch are distinct), so ``batch == k`` is a full-gradient step.
    Randomness comes from ``(seed, epoch)``.
    """
    src = as_source(source, ds)
    k = len(src)
    if not 1 <= batch <= k:
        raise ValueError(f"batch must lie in [1, {k}]")
    rng = np.random.default_rng([seed, run.epoch])
    alpha = run.schedule.rate(run.epoch)
    steps = math.ceil(k / batch)
    w = run.w
    evals = 0
    for _ in range(steps):
        if batch == 1:
            b = rng.integers(k, size=1)
        else:
            b = np.sort(rng.choice(k, size=batch, replace=False))
        g = loss.weighted_grad_sum(w, src.X[b], src.y[b], src.gamma[b])
        evals += len(b)
        w = project(w - alpha * g, run.radius)
    run.w = w
    return run._finish(evals)


def svrg_epoch(run: TrainRun, source, ds: Dataset, loss: LossModel, inner=None, seed=0) -> TrainRun:
    """Snapshot ``w~``, mean weighted gradient ``mu~`` over the source, then
    ``inner`` steps ``w -= alpha (g_j(w) - g_j(w~) + mu~)`` with uniform ``j``.

    Snapshot gradients are kept, so each inner step costs one evaluation.
    """
    src = as_source(source, ds)
    k = len(src)
    inner = k if inner is None else int(inner)
    if inner < 0:
        raise ValueError("inner must be >= 0")
    rng = np.random.default_rng([seed, run.epoch])
    alpha = run.schedule.rate(run.epoch)
    w = run.w
    snap = src.gamma[:, None] * loss.grads(w, src.X, src.y)
    mu = snap.mean(axis=0)
    for j in rng.integers(k, size=inner):
        g = src.gamma[j] * loss.grad(w, src.X[j], src.y[j])
        w = project(w - alpha * (g - snap[j] + mu), run.radius)
    run.w = w
    return run._finish(k + inner)


def saga_epoch(run: TrainRun, source, ds: Dataset, loss: LossModel, seed=0) -> TrainRun:
    """``k`` SAGA steps on the weighted family.

    The gradient table lives in ``run.cache`` and is (re)initialized at the
    current iterate whenever the source changes; the table mean is updated
    incrementally.
    """
    src = as_source(source, ds)
    k = len(src)
    rng = np.random.default_rng([seed, run.epoch])
    alpha = run.schedule.rate(run.epoch)
    w = run.w
    evals = 0
    state = run.cache.get("saga")
    if state is None or state["key"] != src.key:
        table = src.gamma[:, None] * loss.grads(w, src.X, src.y)
        state = {"key": src.key, "table": table, "mean": table.mean(axis=0)}
        run.cache["saga"] = state
        evals += k
    table, mean = state["table"], state["mean"]
    for j in rng.integers(k, size=k):
        g = src.gamma[j] * loss.grad(w, src.X[j], src.y[j])
        w = project(w - alpha * (g - table[j] + mean), run.radius)
        mean += (g - table[j]) / k
        table[j] = g
    evals += k
    run.w = w
    return run._finish(evals)


METHODS = {"ig": ig_epoch, "sgd": sgd_epoch, "svrg": svrg_epoch, "saga": saga_epoch}
