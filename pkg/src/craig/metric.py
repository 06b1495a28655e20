"""Upper bounds on pairwise gradient differences.

The selector only ever sees a :class:`DissimilarityBlock`: a symmetric
matrix ``d[a, b] >= max_w ||grad f_a(w) - grad f_b(w)||`` over the points of
one class. For convex losses the bound is a scaled feature distance; for
networks it is the distance between last-layer gradient proxies.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist
from scipy.special import expit, softmax

from .dataset import Dataset

__all__ = [
    "DissimilarityBlock",
    "ProxyVectors",
    "convex_feature_bounds",
    "softmax_proxy",
    "proxy_bounds",
    "calibrate_scale",
    "lipschitz_constant",
    "sample_ball",
    "save_block",
    "load_block",
]

BLOCK = 256
# Larger classes are never materialized; rows are computed on demand.
MATERIALIZE_LIMIT = 20000

KINDS = ("convex-feature", "last-layer-proxy")


def _pairwise(A, B):
    """Euclidean distances between the rows of A and B."""
    if sp.issparse(A) or sp.issparse(B):
        A = sp.csr_matrix(A)
        B = sp.csr_matrix(B)
        a2 = np.asarray(A.multiply(A).sum(axis=1)).ravel()
        b2 = np.asarray(B.multiply(B).sum(axis=1)).ravel()
        G = np.asarray((A @ B.T).todense())
        sq = a2[:, None] + b2[None, :] - 2.0 * G
        return np.sqrt(np.maximum(sq, 0.0))
    return cdist(A, B)


@dataclass
class DissimilarityBlock:
    """Pairwise gradient-difference bounds for one class.

    ``dist[a, b] = scale * ||p_a - p_b|| (+ |y_a - y_b| for regression)``
    where ``p`` are the stored ``points`` (features or proxies). ``dist`` is
    ``None`` for blocks too large to materialize; use :meth:`rows`.
    """

    class_id: int
    indices: np.ndarray
    scale: float
    kind: str
    points: object = None
    label_values: np.ndarray | None = None
    dist: np.ndarray | None = None
    additive: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown block kind {self.kind!r}")
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self._max = None

    @property
    def m(self) -> int:
        return len(self.indices)

    def rows(self, local) -> np.ndarray:
        """``dist[local, :]`` as a dense ``(len(local), m)`` array."""
        local = np.atleast_1d(np.asarray(local, dtype=np.int64))
        if self.dist is not None:
            return self.dist[local]
        pts = self.points
        out = self.scale * _pairwise(pts[local], pts)
        if self.label_values is not None:
            yv = self.label_values
            out += np.abs(yv[local][:, None] - yv[None, :])
        out[np.arange(len(local)), local] = 0.0
        return out

    def max_dist(self) -> float:
        if self._max is None:
            if self.dist is not None:
                self._max = float(self.dist.max()) if self.m else 0.0
            else:
                best = 0.0
                for lo in range(0, self.m, BLOCK):
                    best = max(best, float(self.rows(np.arange(lo, min(lo + BLOCK, self.m))).max()))
                self._max = best
        return self._max

    def materialize(self) -> np.ndarray:
        if self.dist is None:
            self.dist = _build(self.points, self.scale, self.label_values)
        return self.dist


def _build(points, scale, label_values=None):
    m = points.shape[0]
    D = np.empty((m, m))
    for lo in range(0, m, BLOCK):
        hi = min(lo + BLOCK, m)
        D[lo:hi] = _pairwise(points[lo:hi], points)
    if sp.issparse(points):
        # the Gram route is not bit-symmetric; mirror the upper triangle
        D = np.triu(D, 1)
        D = D + D.T
    np.fill_diagonal(D, 0.0)
    D *= scale
    if label_values is not None:
        D += np.abs(label_values[:, None] - label_values[None, :])
    return D


def _group_points(X, group):
    pts = X[group]
    if sp.issparse(pts):
        pts = sp.csr_matrix(pts)
    else:
        pts = np.ascontiguousarray(pts, dtype=np.float64)
    return pts


def convex_feature_bounds(ds: Dataset, group, scale, class_id=None, materialize=None):
    """Feature-space gradient bounds ``scale * ||x_a - x_b||`` for ``group``.

    For classification all points must share one label. For regression the
    labels may differ inside a group and the bound gains the exact residual
    term ``|y_a - y_b|`` (valid because ``||x|| <= 1``).
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    group = np.asarray(group, dtype=np.int64)
    if len(group) == 0:
        raise ValueError("empty group")
    labels = ds.labels[group]
    label_values = None
    if ds.task == "classification":
        if np.any(labels != labels[0]):
            raise ValueError("convex_feature_bounds needs a single-label group")
        cid = int(labels[0]) if class_id is None else class_id
    else:
        label_values = np.asarray(labels, dtype=np.float64)
        cid = 0 if class_id is None else class_id
    block = DissimilarityBlock(
        class_id=cid,
        indices=group,
        scale=float(scale),
        kind="convex-feature",
        points=_group_points(ds.features, group),
        label_values=label_values,
    )
    if materialize if materialize is not None else len(group) <= MATERIALIZE_LIMIT:
        block.materialize()
    return block


@dataclass
class ProxyVectors:
    """Per-point gradients of the loss w.r.t. the last layer's input."""

    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError("proxy vectors must be a 2-d array")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("proxy vectors must be finite")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def softmax_proxy(logits, labels) -> ProxyVectors:
    """``softmax(logits_i) - onehot(y_i)`` for cross-entropy with softmax."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError("logits must be (m, K) and labels (m,)")
    K = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ValueError("labels out of range")
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    g = softmax(logits, axis=1)
    g[np.arange(len(labels)), labels] -= 1.0
    return ProxyVectors(g)


def proxy_bounds(pv: ProxyVectors, group, class_id=0, materialize=None):
    """Distances between proxy vectors of ``group`` (row indices into ``pv``)."""
    group = np.asarray(group, dtype=np.int64)
    pts = pv.vectors[group]
    block = DissimilarityBlock(
        class_id=class_id,
        indices=group,
        scale=1.0,
        kind="last-layer-proxy",
        points=np.ascontiguousarray(pts),
    )
    if materialize if materialize is not None else len(group) <= MATERIALIZE_LIMIT:
        block.materialize()
    return block


def lipschitz_constant(loss, radius, max_abs_label=1.0):
    """Closed-form ``c`` with ``||grad f_i - grad f_j|| <= c ||x_i - x_j||``
    over ``||w|| <= radius`` for rows in the unit ball.

    Logistic (same label ``s``): ``grad f = -s x sigmoid(-s<x,w>) + lam w``;
    splitting the difference gives ``sigmoid(radius) + radius/4``. The
    conventional ``radius`` is kept as a floor; it alone fails for small
    radii.
    Ridge: ``x x^T w - y x`` gives ``2 radius + max|y|`` plus the separate
    ``|y_i - y_j|`` term handled by the block.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if loss.kind == "logistic":
        return float(max(radius, expit(radius) + radius / 4.0))
    return float(2.0 * radius + max_abs_label)


def sample_ball(rng, d, radius, count, surface=0.5):
    """``count`` points of the ``radius`` ball.

    A ``surface`` fraction lies on the sphere (where the bounds are
    tightest); the rest is uniform inside the ball.
    """
    v = rng.standard_normal((count, d))
    v /= np.maximum(np.linalg.norm(v, axis=1, keepdims=True), 1e-300)
    r = np.full(count, float(radius))
    inner = count - int(round(surface * count))
    r[:inner] *= rng.random(inner) ** (1.0 / d)
    return v * r[:, None]


def calibrate_scale(loss, ds: Dataset, radius, samples=1000, seed=0):
    """Scale for :func:`convex_feature_bounds`, audited by sampling.

    Starts from :func:`lipschitz_constant` and checks it on ``samples``
    random ``(w, i, j)`` triples with ``i, j`` sharing a label (any pair for
    regression). If a triple violates the bound the scale is raised to the
    worst observed ratio times 1.01.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    y = ds.labels
    max_abs = float(np.max(np.abs(y))) if ds.task == "regression" else 1.0
    c = lipschitz_constant(loss, radius, max_abs)
    rng = np.random.default_rng(seed)
    if ds.task == "classification":
        pools = [np.flatnonzero(y == k) for k in np.unique(y)]
        pools = [p for p in pools if len(p) >= 2]
    else:
        pools = [np.arange(ds.n)] if ds.n >= 2 else []
    worst = 0.0
    if pools and samples > 0:
        sizes = np.array([len(p) for p in pools], dtype=np.float64)
        which = rng.choice(len(pools), size=samples, p=sizes / sizes.sum())
        W = sample_ball(rng, ds.d, radius, samples)
        for t in range(samples):
            pool = pools[which[t]]
            i, j = rng.choice(pool, size=2, replace=False)
            rows = ds.rows([i, j])
            dx = float(np.linalg.norm(rows[0] - rows[1]))
            if dx == 0.0:
                continue
            g = loss.grads(W[t], rows, y[[i, j]])
            gap = float(np.linalg.norm(g[0] - g[1]))
            if ds.task == "regression":
                gap -= abs(float(y[i]) - float(y[j]))
            worst = max(worst, gap / dx)
    # ratios equal to c up to rounding are not violations
    if worst > c * (1.0 + 1e-12):
        c = worst * 1.01
    return max(c, np.finfo(float).eps)


_HEADER = struct.Struct("<8sqqdB7x")
_MAGIC = b"CRGDIST1"


def save_block(block: DissimilarityBlock, path):
    """Binary dump: header (class id, m, scale, kind), the ``m`` global
    indices as int64, then the row-major float64 matrix, little-endian."""
    D = block.materialize()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, block.class_id, block.m, block.scale, KINDS.index(block.kind)))
        fh.write(np.asarray(block.indices, dtype="<i8").tobytes())
        fh.write(np.ascontiguousarray(D, dtype="<f8").tobytes())


def load_block(path) -> DissimilarityBlock:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated dissimilarity file")
    magic, cid, m, scale, kind = _HEADER.unpack_from(raw)
    if magic != _MAGIC or kind >= len(KINDS):
        raise ValueError(f"{path}: not a dissimilarity dump")
    expect = _HEADER.size + 8 * m + 8 * m * m
    if len(raw) != expect:
        raise ValueError(f"{path}: expected {expect} bytes, found {len(raw)}")
    off = _HEADER.size
    idx = np.frombuffer(raw, dtype="<i8", count=m, offset=off).astype(np.int64)
    D = np.frombuffer(raw, dtype="<f8", count=m * m, offset=off + 8 * m).reshape(m, m).copy()
    return DissimilarityBlock(cid, idx, scale, KINDS[kind], dist=D)
