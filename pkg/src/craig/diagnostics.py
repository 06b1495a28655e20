"""Gradient-approximation error of a coreset and convergence-radius checks.

Everything here measures; nothing is asserted. The checks report the
constants they were computed from so a failing case can be inspected.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .coreset import Coreset
from .dataset import Dataset
from .metric import sample_ball
from .optim.losses import LossModel
from .optim.schedules import Schedule

__all__ = [
    "gradient_error",
    "ErrorReport",
    "error_sweep",
    "Constants",
    "estimate_constants",
    "TheoremCheck",
    "theorem_check",
]


def _subset_arrays(ds: Dataset, cs: Coreset):
    return ds.rows(cs.order), ds.labels[cs.order], cs.weights.astype(np.float64)


def gradient_error(ds: Dataset, cs: Coreset, loss: LossModel, w) -> float:
    """``|| sum_V grad f_i(w) - sum_S gamma_j grad f_j(w) ||``."""
    w = np.asarray(w, dtype=np.float64)
    full = loss.weighted_grad_sum(w, ds.features, ds.labels)
    Xs, ys, g = _subset_arrays(ds, cs)
    return float(np.linalg.norm(full - loss.weighted_grad_sum(w, Xs, ys, g)))


@dataclass
class ErrorReport:
    """Per-sample gradient errors for a coreset and random baselines."""

    full_norms: np.ndarray
    errors: np.ndarray
    random_errors: np.ndarray  # (n_random, samples)
    bound: float
    w_norms: np.ndarray
    seed: int = 0
    radius: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def normalizer(self) -> float:
        top = float(np.max(self.full_norms)) if len(self.full_norms) else 0.0
        return top if top > 0 else 1.0

    @property
    def normalized_errors(self):
        return self.errors / self.normalizer

    @property
    def normalized_random_errors(self):
        return self.random_errors / self.normalizer

    @property
    def within_bound(self):
        return self.errors <= self.bound + 1e-9

    def summary(self) -> dict:
        rnd = self.normalized_random_errors
        return {
            "samples": int(len(self.errors)),
            "radius": self.radius,
            "seed": self.seed,
            "bound": self.bound,
            "normalizer": self.normalizer,
            "max_error": float(np.max(self.errors)),
            "mean_normalized_error": float(np.mean(self.normalized_errors)),
            "mean_normalized_random_error": float(np.mean(rnd)) if rnd.size else None,
            "all_within_bound": bool(np.all(self.within_bound)),
            **self.meta,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)

    def to_csv(self, path):
        rnd = self.random_errors.mean(axis=0) if self.random_errors.size else np.full(len(self.errors), np.nan)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["sample", "w_norm", "full_grad_norm", "craig_error", "craig_error_normalized",
                         "bound", "within_bound", "random_error_mean"])
            for t in range(len(self.errors)):
                wr.writerow([t, repr(float(self.w_norms[t])), repr(float(self.full_norms[t])),
                             repr(float(self.errors[t])), repr(float(self.normalized_errors[t])),
                             repr(self.bound), int(self.within_bound[t]), repr(float(rnd[t]))])


def error_sweep(ds: Dataset, cs: Coreset, loss: LossModel, samples=100, radius=10.0, seed=0,
                n_random=20, extra_points=()) -> ErrorReport:
    """Gradient error at ``samples`` points drawn uniformly from the ball.

    ``n_random`` uniformly drawn subsets of the same size, every point
    weighted ``n/r``, are evaluated at the same points for comparison.
    ``extra_points`` (e.g. training iterates) are appended to the samples.
    """
    rng = np.random.default_rng(seed)
    W = sample_ball(rng, ds.d, radius, samples, surface=0.0)
    if len(extra_points):
        W = np.vstack([W, np.asarray(extra_points, dtype=np.float64).reshape(-1, ds.d)])
    Xs, ys, g = _subset_arrays(ds, cs)
    r = cs.size
    rand_sets = [np.sort(rng.choice(ds.n, size=r, replace=False)) for _ in range(n_random)]
    rand_X = [(ds.rows(s), ds.labels[s]) for s in rand_sets]
    rand_w = np.full(r, ds.n / r)
    full_norms, errors = np.empty(len(W)), np.empty(len(W))
    rand_err = np.empty((n_random, len(W)))
    for t, w in enumerate(W):
        full = loss.weighted_grad_sum(w, ds.features, ds.labels)
        full_norms[t] = np.linalg.norm(full)
        errors[t] = np.linalg.norm(full - loss.weighted_grad_sum(w, Xs, ys, g))
        for q, (Xr, yr) in enumerate(rand_X):
            rand_err[q, t] = np.linalg.norm(full - loss.weighted_grad_sum(w, Xr, yr, rand_w))
    return ErrorReport(full_norms, errors, rand_err, float(cs.residual), np.linalg.norm(W, axis=1),
                       seed=seed, radius=float(radius), meta={"size": r, "n": ds.n})


@dataclass
class Constants:
    """Curvature and gradient-size constants of ``sum_i f_i`` on the ball."""

    mu: float
    C: float
    beta: float
    C_sampled: float
    mu_regularizer: float
    radius: float


def estimate_constants(ds: Dataset, loss: LossModel, radius=10.0, samples=1000, seed=0) -> Constants:
    """Constants entering the convergence radii.

    ``mu``: ridge uses the exact smallest Hessian eigenvalue of the sum
    (``lambda_min(X^T X) + n lam``); logistic uses the regularizer's
    ``n lam``. ``C``: the closed-form supremum of ``||grad f_i||`` over the
    ball (never below the sampled maximum). ``beta``: sum of per-component
    gradient Lipschitz constants.
    """
    X, y = ds.features, ds.labels
    n_lam = ds.n * loss.lam
    if loss.kind == "ridge":
        mu = float(np.linalg.eigvalsh(loss.hessian_sum(np.zeros(ds.d), X, y))[0])
    else:
        mu = n_lam
    rng = np.random.default_rng(seed)
    W = sample_ball(rng, ds.d, radius, samples)
    idx = rng.integers(ds.n, size=samples)
    rows = ds.rows(idx)
    sampled = 0.0
    for t in range(samples):
        sampled = max(sampled, float(np.linalg.norm(loss.grad(W[t], rows[t], y[idx[t]]))))
    C = max(float(np.max(loss.grad_norm_sup(X, y, radius))), sampled)
    beta = float(np.sum(loss.smoothness(X)))
    return Constants(mu=mu, C=C, beta=beta, C_sampled=sampled, mu_regularizer=n_lam, radius=float(radius))


@dataclass
class TheoremCheck:
    """Predicted vs observed distance to the optimum along a run."""

    mode: str
    tau: float
    alpha: float
    mu: float
    C: float
    beta: float
    r: int
    gamma_max: int
    eps: float
    R: float
    d0: float
    observed: list
    predicted: list
    terms: dict
    asymptote: float
    tail_start: int
    preconditions_met: bool
    passed: bool

    def to_dict(self):
        return asdict(self)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["epoch", "observed", "predicted", "tail"])
            for k, (o, p) in enumerate(zip(self.observed, self.predicted)):
                wr.writerow([k, repr(o), repr(p), int(k >= self.tail_start)])


def _check_regime(schedule, tau, alpha):
    if schedule is None:
        return
    sched_tau = schedule.power_tau
    if sched_tau is None or not math.isclose(sched_tau, tau, abs_tol=1e-12):
        raise ValueError(f"run used a {schedule.kind} schedule, not alpha/k^{tau}")
    if not math.isclose(schedule.alpha0, alpha, rel_tol=1e-12):
        raise ValueError(f"run used alpha={schedule.alpha0}, check asked for {alpha}")


def theorem_check(iterates, constants: Constants, cs: Coreset, eps, w_star, mode="thm1", tau=0.0,
                  alpha=None, schedule=None, tail=0.2) -> TheoremCheck:
    """Compare ``||w_k - w*||`` with the predicted neighborhood.

    ``iterates[k]`` is the parameter vector after ``k`` epochs. With
    ``tau = 0`` the finite-``k`` bounds are used (transient factor
    ``(1 - alpha mu)^k``); otherwise the check is that the tail stays
    below 1.1 times the asymptotic radius (``tau < 1``) or the ``1/k``
    bound (``tau = 1``). The check passes iff the step-size preconditions
    hold and every tail iterate is inside the prediction.
    """
    if mode not in ("thm1", "thm2"):
        raise ValueError(f"unknown mode {mode!r}")
    if alpha is None:
        if schedule is None:
            raise ValueError("give alpha or the run's schedule")
        alpha = schedule.alpha0
    _check_regime(schedule, tau, alpha)
    W = np.asarray(iterates, dtype=np.float64)
    w_star = np.asarray(w_star, dtype=np.float64)
    obs = np.linalg.norm(W - w_star[None, :], axis=1)
    mu, C, beta = constants.mu, constants.C, constants.beta
    r, gmax = cs.size, int(cs.weights.max())
    d0 = float(obs[0])
    R = min(d0, (r * gmax * C + eps) / mu)
    K = len(obs)
    k = np.arange(K, dtype=np.float64)
    if mode == "thm1":
        bias = 2.0 * eps * R / mu
        if tau == 0:
            var = alpha * r**2 * gmax**2 * C**2 / mu
            transient = (1.0 - alpha * mu) ** k * d0**2
            pred = np.sqrt(transient + bias + var)
        elif tau == 1:
            var = r**2 * gmax**2 * C**2 / mu
            pred = 1.1 * np.sqrt(bias + var / np.maximum(k, 1.0))
            transient = np.zeros(K)
        else:
            var = 0.0
            transient = np.zeros(K)
            pred = np.full(K, 1.1 * math.sqrt(bias))
        asym = math.sqrt(bias + (var if tau == 0 else 0.0))
        ok_pre = alpha * mu <= 1.0
    else:
        bias = 2.0 * eps / mu
        if tau == 0:
            var = alpha * beta * C * r * gmax**2 / mu
            transient = (1.0 - alpha * mu) ** k * d0
            pred = transient + bias + var
        elif tau == 1:
            var = beta * C * r * gmax**2 / mu
            pred = 1.1 * (bias + var / np.maximum(k, 1.0))
            transient = np.zeros(K)
        else:
            var = 0.0
            transient = np.zeros(K)
            pred = np.full(K, 1.1 * bias)
        asym = bias + (var if tau == 0 else 0.0)
        ok_pre = alpha * beta <= 1.0
    tail_start = min(K - 1, int(math.floor((1.0 - tail) * K)))
    inside = bool(np.all(obs[tail_start:] <= pred[tail_start:]))
    return TheoremCheck(
        mode=mode, tau=float(tau), alpha=float(alpha), mu=float(mu), C=float(C), beta=float(beta),
        r=int(r), gamma_max=gmax, eps=float(eps), R=float(R), d0=d0,
        observed=obs.tolist(), predicted=np.asarray(pred, dtype=np.float64).tolist(),
        terms={"bias": float(bias), "variance": float(var), "transient_final": float(np.asarray(transient)[-1])},
        asymptote=float(asym), tail_start=tail_start, preconditions_met=bool(ok_pre),
        passed=bool(ok_pre and inside),
    )
