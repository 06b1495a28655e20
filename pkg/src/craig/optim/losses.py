"""Per-example convex losses with closed-form gradients.

Every component carries its own ``0.5 * lam * ||w||^2`` term, so the
training objective is ``sum_i f_i(w)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, log_expit

__all__ = ["LossModel", "signed_labels"]


def signed_labels(y):
    """Labels as +/-1: anything positive is +1, everything else -1."""
    return np.where(np.asarray(y) > 0, 1.0, -1.0)


def _dot(X, w):
    return np.asarray(X @ w).ravel()


def _scale_rows(X, coef):
    if sp.issparse(X):
        return np.asarray(X.multiply(coef[:, None]).todense())
    return X * coef[:, None]


@dataclass(frozen=True)
class LossModel:
    """``kind`` is ``"logistic"`` (L2-regularized) or ``"ridge"``."""

    kind: str = "logistic"
    lam: float = 1e-5

    def __post_init__(self):
        if self.kind not in ("logistic", "ridge"):
            raise ValueError(f"unknown loss {self.kind!r}")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")

    def targets(self, y):
        y = np.asarray(y, dtype=np.float64)
        return signed_labels(y) if self.kind == "logistic" else y

    def values(self, w, X, y):
        """Component values ``f_i(w)`` for the rows of ``X``."""
        t = self.targets(y)
        z = _dot(X, w)
        reg = 0.5 * self.lam * float(w @ w)
        if self.kind == "logistic":
            return -log_expit(t * z) + reg
        return 0.5 * (z - t) ** 2 + reg

    def grads(self, w, X, y):
        """Row ``i`` is ``grad f_i(w)``."""
        t = self.targets(y)
        z = _dot(X, w)
        if self.kind == "logistic":
            coef = -t * expit(-t * z)
        else:
            coef = z - t
        return _scale_rows(X, coef) + self.lam * w[None, :]

    def grad(self, w, x, y):
        """Gradient of a single component."""
        x = np.asarray(x, dtype=np.float64)
        return self.grads(w, x[None, :], np.atleast_1d(y))[0]

    def weighted_grad_sum(self, w, X, y, weights=None):
        """``sum_j weights_j * grad f_j(w)``; the single code path every
        caller (training and diagnostics) goes through."""
        G = self.grads(w, X, y)
        if weights is None:
            weights = np.ones(G.shape[0])
        return np.asarray(weights, dtype=np.float64) @ G

    def mean_value(self, w, X, y):
        return float(np.mean(self.values(w, X, y)))

    def hessian_sum(self, w, X, y):
        """Hessian of ``sum_i f_i`` at ``w`` (dense ``d x d``)."""
        n, d = X.shape
        if self.kind == "logistic":
            t = self.targets(y)
            s = expit(t * _dot(X, w))
            curv = s * (1.0 - s)
        else:
            curv = np.ones(n)
        if sp.issparse(X):
            H = np.asarray((X.T @ X.multiply(curv[:, None])).todense())
        else:
            H = X.T @ (X * curv[:, None])
        return H + n * self.lam * np.eye(d)

    def smoothness(self, X):
        """Per-component gradient Lipschitz constants ``beta_i``."""
        if sp.issparse(X):
            sq = np.asarray(X.multiply(X).sum(axis=1)).ravel()
        else:
            sq = np.einsum("ij,ij->i", X, X)
        curv = 0.25 if self.kind == "logistic" else 1.0
        return curv * sq + self.lam

    def grad_norm_sup(self, X, y, radius):
        """Upper bound on ``sup_{||w|| <= radius} ||grad f_i(w)||`` per row.

        Ridge: attained at ``w = -sign(y) radius x/||x||``.
        Logistic: the sigmoid factor is below 1.
        """
        if sp.issparse(X):
            norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        else:
            norms = np.linalg.norm(X, axis=1)
        if self.kind == "logistic":
            return norms * expit(radius * norms) + self.lam * radius
        t = np.abs(np.asarray(y, dtype=np.float64))
        return radius * norms**2 + t * norms + self.lam * radius
