"""Two-layer perceptron: sigmoid hidden layer, softmax output, L2 penalty."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_softmax, softmax

__all__ = ["MlpModel", "mlp_forward", "mlp_forward_backward", "mlp_step"]

PARAMS = ("W1", "b1", "W2", "b2")


@dataclass
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    lam: float = 1e-4

    @classmethod
    def init(cls, d, hidden, classes, lam=1e-4, seed=0):
        """Weights uniform in ``+-1/sqrt(fan_in)``; biases zero."""
        rng = np.random.default_rng(seed)
        a1, a2 = 1.0 / np.sqrt(d), 1.0 / np.sqrt(hidden)
        return cls(
            W1=rng.uniform(-a1, a1, (d, hidden)),
            b1=np.zeros(hidden),
            W2=rng.uniform(-a2, a2, (hidden, classes)),
            b2=np.zeros(classes),
            lam=lam,
        )

    @classmethod
    def zeros(cls, d, hidden, classes, lam=1e-4):
        return cls(np.zeros((d, hidden)), np.zeros(hidden), np.zeros((hidden, classes)), np.zeros(classes), lam)

    @property
    def sizes(self):
        return self.W1.shape[0], self.W1.shape[1], self.W2.shape[1]

    def params(self):
        return {k: getattr(self, k) for k in PARAMS}

    def copy(self):
        return MlpModel(*(getattr(self, k).copy() for k in PARAMS), lam=self.lam)

    def predict(self, X):
        return np.argmax(mlp_forward(self, X), axis=1)


def mlp_forward(model: MlpModel, X):
    """Logits ``(m, K)`` for a batch."""
    h = expit(np.asarray(X) @ model.W1 + model.b1)
    return h @ model.W2 + model.b2


def mlp_forward_backward(model: MlpModel, X, y, sample_weight=None):
    """Loss, exact gradients and last-layer proxies for one batch.

    The loss is ``sum_i s_i CE_i / b + lam/2 (||W1||^2 + ||W2||^2)`` with
    ``b`` the batch size and ``s_i`` the sample weights (default 1), so
    coreset weights act as per-element stepsizes. The proxies
    ``softmax(z_i) - onehot(y_i)`` fall out of the forward pass before any
    backpropagation.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    b = X.shape[0]
    if b == 0:
        raise ValueError("empty batch")
    s = np.ones(b) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    h = expit(X @ model.W1 + model.b1)
    z = h @ model.W2 + model.b2
    rows = np.arange(b)
    ce = -log_softmax(z, axis=1)[rows, y]
    reg = 0.5 * model.lam * (np.sum(model.W1**2) + np.sum(model.W2**2))
    loss = float(s @ ce / b + reg)

    proxies = softmax(z, axis=1)
    proxies[rows, y] -= 1.0

    dz = proxies * (s / b)[:, None]
    grads = {
        "W2": h.T @ dz + model.lam * model.W2,
        "b2": dz.sum(axis=0),
    }
    dh = dz @ model.W2.T
    da = dh * h * (1.0 - h)
    grads["W1"] = X.T @ da + model.lam * model.W1
    grads["b1"] = da.sum(axis=0)
    return loss, grads, proxies


def mlp_step(model: MlpModel, grads, lr):
    for k in PARAMS:
        setattr(model, k, getattr(model, k) - lr * grads[k])
    return model
