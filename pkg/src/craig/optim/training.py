"""End-to-end training loops and metric logging."""
from __future__ import annotations

import csv
import time

import numpy as np

from ..coreset import Coreset, allocate_sizes, select_per_class
from ..dataset import Dataset, partition
from ..metric import calibrate_scale, convex_feature_bounds, proxy_bounds, softmax_proxy
from .losses import LossModel
from .methods import METHODS, TrainRun, as_source
from .mlp import MlpModel, mlp_forward, mlp_forward_backward, mlp_step
from .schedules import Schedule

__all__ = [
    "solve_optimum",
    "craig_coreset",
    "feature_blocks",
    "select_by_proxy",
    "train",
    "train_with_per_epoch_reselection",
    "evaluate",
    "write_metrics_csv",
    "METRIC_COLUMNS",
]

METRIC_COLUMNS = ("epoch", "wallclock_s", "grad_evals", "train_loss", "test_loss", "test_error", "dist_to_opt")


def solve_optimum(loss: LossModel, X, y, weights=None, tol=1e-10, max_iter=200):
    """Minimizer of ``sum_i weights_i f_i``.

    Ridge is solved from the normal equations. Logistic uses damped Newton
    on the full objective until the gradient norm is below ``tol``.
    """
    X = np.asarray(X.toarray() if hasattr(X, "toarray") else X, dtype=np.float64)
    n, d = X.shape
    s = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    W = s.sum()
    if loss.kind == "ridge":
        A = X.T @ (X * s[:, None]) + W * loss.lam * np.eye(d)
        return np.linalg.solve(A, X.T @ (s * np.asarray(y, dtype=np.float64)))

    def objective(w):
        return float(s @ loss.values(w, X, y))

    w = np.zeros(d)
    for _ in range(max_iter):
        g = loss.weighted_grad_sum(w, X, y, s)
        if np.linalg.norm(g) <= tol:
            break
        t = loss.targets(y)
        p = 1.0 / (1.0 + np.exp(-t * (X @ w)))
        H = X.T @ (X * (s * p * (1 - p))[:, None]) + W * loss.lam * np.eye(d)
        step = np.linalg.solve(H, g)
        f0, lr = objective(w), 1.0
        while lr > 1e-12 and objective(w - lr * step) > f0 - 1e-4 * lr * float(g @ step):
            lr *= 0.5
        w = w - lr * step
    return w


def feature_blocks(ds: Dataset, scale, bins=8):
    """One convex feature-distance block per class (or label bin)."""
    part = partition(ds, bins)
    return part, [convex_feature_bounds(ds, g, scale, class_id=c) for c, g in part.groups]


def craig_coreset(ds: Dataset, loss: LossModel, fraction=None, epsilon=None, radius=10.0,
                  variant="lazy", seed=0, bins=8, scale=None, audit_samples=1000):
    """Select a weighted coreset from feature-space gradient bounds.

    Returns ``(coreset, blocks)``; the calibrated scale and selection time
    are recorded in ``coreset.meta``.
    """
    t0 = time.perf_counter()
    if scale is None:
        scale = calibrate_scale(loss, ds, radius, samples=audit_samples, seed=seed)
    part, blocks = feature_blocks(ds, scale, bins)
    sizes = allocate_sizes(part, fraction) if fraction is not None else None
    cs = select_per_class(blocks, sizes=sizes, epsilon=epsilon, variant=variant, seed=seed, n=ds.n)
    cs.meta.update(scale=scale, radius=radius, selection_s=time.perf_counter() - t0)
    return cs, blocks


def evaluate(model, ds: Dataset, test: Dataset | None = None, w_star=None):
    """Metrics for a convex parameter vector or an :class:`MlpModel`."""
    out = {"train_loss": float("nan"), "test_loss": float("nan"),
           "test_error": float("nan"), "dist_to_opt": float("nan")}
    if isinstance(model, MlpModel):
        out["train_loss"] = mlp_forward_backward(model, ds.dense(), ds.labels)[0]
        if test is not None:
            Xt = test.dense()
            out["test_loss"] = mlp_forward_backward(model, Xt, test.labels)[0]
            out["test_error"] = float(np.mean(np.argmax(mlp_forward(model, Xt), axis=1) != test.labels))
        return out
    loss, w = model
    out["train_loss"] = loss.mean_value(w, ds.features, ds.labels)
    if test is not None:
        out["test_loss"] = loss.mean_value(w, test.features, test.labels)
        z = np.asarray(test.features @ w).ravel()
        if loss.kind == "logistic":
            out["test_error"] = float(np.mean((z > 0).astype(int) != (test.labels > 0)))
        else:
            out["test_error"] = float(np.mean((z - test.labels) ** 2))
    if w_star is not None:
        out["dist_to_opt"] = float(np.linalg.norm(w - w_star))
    return out


def _epoch_kwargs(optimizer, seed, batch, inner):
    if optimizer == "ig":
        return {"batch": batch}
    if optimizer == "sgd":
        return {"batch": batch, "seed": seed}
    if optimizer == "svrg":
        return {"inner": inner, "seed": seed}
    if optimizer == "saga":
        return {"seed": seed}
    raise ValueError(f"unknown optimizer {optimizer!r}; expected one of {sorted(METHODS)}")


def train(ds: Dataset, loss: LossModel, optimizer="ig", schedule=None, epochs=10, source=None,
          test=None, w_star=None, seed=0, radius=None, batch=1, inner=None, w0=None,
          clock_offset=0.0, log=True) -> TrainRun:
    """Run ``epochs`` epochs of a convex optimizer on ``source`` (a
    :class:`Coreset`, or the full data when ``None``)."""
    schedule = schedule or Schedule("constant", 0.1)
    kwargs = _epoch_kwargs(optimizer, seed, batch, inner)
    step = METHODS[optimizer]
    run = TrainRun(np.zeros(ds.d) if w0 is None else w0, schedule, radius=radius)
    src = as_source(source if source is not None else ds, ds)
    t0 = time.perf_counter()
    for _ in range(epochs):
        step(run, src, ds, loss, **kwargs)
        if log:
            row = {"epoch": run.epoch, "wallclock_s": clock_offset + time.perf_counter() - t0,
                   "grad_evals": run.grad_evals}
            row.update(evaluate((loss, run.w), ds, test, w_star))
            run.log.append(row)
    return run


def _mlp_epoch(run: TrainRun, idx, gamma, ds: Dataset, lr, batch, rng):
    model = run.model
    X, y = (ds.dense() if ds.is_sparse else ds.features), ds.labels
    order = rng.permutation(len(idx))
    for lo in range(0, len(idx), batch):
        b = order[lo:lo + batch]
        rows = idx[b]
        _, grads, _ = mlp_forward_backward(model, X[rows], y[rows], gamma[b])
        mlp_step(model, grads, lr)
    run.grad_evals += len(idx)
    run.epoch += 1
    return run


def select_by_proxy(model: MlpModel, ds: Dataset, fraction, variant="lazy", seed=0) -> Coreset:
    """Per-class coreset on last-layer gradient proxies at the current weights."""
    part = partition(ds)
    pv = softmax_proxy(mlp_forward(model, ds.dense()), ds.labels)
    blocks = [proxy_bounds(pv, g, class_id=c) for c, g in part.groups]
    return select_per_class(blocks, sizes=allocate_sizes(part, fraction), variant=variant, seed=seed, n=ds.n)


def train_with_per_epoch_reselection(ds: Dataset, fraction, epochs, optimizer="sgd", model=None,
                                     seed=0, schedule=None, test=None, batch=10, period=1,
                                     variant="lazy", radius=10.0, w_star=None, inner=None,
                                     projection=None) -> TrainRun:
    """Train on CRAIG subsets of ``fraction`` of the data.

    Convex models (``model`` a :class:`LossModel`) select once from
    parameter-free feature bounds. An :class:`MlpModel` reselects every
    ``period`` epochs from the last-layer proxies at the current weights and
    takes minibatch SGD steps on the weighted subset. Wall-clock includes
    selection time.
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if isinstance(model, LossModel) or model is None:
        loss = model or LossModel()
        t0 = time.perf_counter()
        cs, _ = craig_coreset(ds, loss, fraction=fraction, radius=radius, variant=variant, seed=seed)
        run = train(ds, loss, optimizer, schedule, epochs, source=cs, test=test, w_star=w_star,
                    seed=seed, radius=projection, batch=batch, inner=inner,
                    clock_offset=time.perf_counter() - t0)
        run.cache["coreset"] = cs
        return run

    schedule = schedule or Schedule("constant", 1e-2)
    model = model.copy()
    run = TrainRun(np.zeros(0), schedule, model=model)
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    cs = None
    for k in range(epochs):
        if fraction >= 1.0:
            idx, gamma = np.arange(ds.n), np.ones(ds.n)
        else:
            if cs is None or k % period == 0:
                cs = select_by_proxy(model, ds, fraction, variant=variant, seed=seed + k)
            idx, gamma = cs.order, cs.weights.astype(np.float64)
        _mlp_epoch(run, idx, gamma, ds, schedule.rate(k), batch, rng)
        row = {"epoch": run.epoch, "wallclock_s": time.perf_counter() - t0, "grad_evals": run.grad_evals}
        row.update(evaluate(model, ds, test))
        run.log.append(row)
    run.cache["coreset"] = cs
    return run


def write_metrics_csv(run_or_rows, path, meta=None, drop_wallclock=False):
    """Per-epoch metrics as CSV; ``meta`` goes into leading ``#`` lines."""
    rows = run_or_rows.log if isinstance(run_or_rows, TrainRun) else list(run_or_rows)
    cols = [c for c in METRIC_COLUMNS if not (drop_wallclock and c == "wallclock_s")]
    with open(path, "w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}={v}\n")
        writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: ("" if _isnan(row.get(c)) else _fmt(row.get(c))) for c in cols})


def _isnan(v):
    return v is None or (isinstance(v, float) and v != v)


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v
