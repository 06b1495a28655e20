"""Loading, normalizing and partitioning training data.

A :class:`Dataset` is the universe of points over which coresets are
selected. Features are either a dense ``(n, d)`` array or a CSR matrix;
both are treated as immutable once constructed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DataFormatError",
    "Dataset",
    "ClassPartition",
    "load_libsvm",
    "save_libsvm",
    "load_csv",
    "normalize_rows",
    "minmax_scale",
    "normalize",
    "partition_by_class",
    "partition_by_quantiles",
    "partition",
    "train_test_split",
]

# Sparse inputs denser than this are converted to dense arrays.
DENSE_THRESHOLD = 0.25
MAX_CLASSES = 20


class DataFormatError(ValueError):
    """Raised for malformed or empty input files."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus labels.

    ``labels`` holds class ids ``0..K-1`` for classification and real
    targets for regression.
    """

    features: np.ndarray | sp.csr_matrix
    labels: np.ndarray
    task: str = "classification"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.task not in ("classification", "regression"):
            raise ValueError(f"unknown task {self.task!r}")
        X = self.features
        if sp.issparse(X):
            X = sp.csr_matrix(X, dtype=np.float64)
            X.sort_indices()
            vals = X.data
        else:
            X = np.array(X, dtype=np.float64)
            if X.ndim != 2:
                raise ValueError("features must be a 2-d array")
            vals = X
        y = np.asarray(self.labels)
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("dataset needs n >= 1 and d >= 1")
        if y.shape != (X.shape[0],):
            raise ValueError(f"labels shape {y.shape} does not match n={X.shape[0]}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("features must be finite")
        if self.task == "classification":
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise ValueError("classification labels must be integral")
            y = y.astype(np.int64)
            if y.min() < 0:
                raise ValueError("class ids must be nonnegative")
            declared = self.meta.get("classes")
            if declared is not None:
                # a loader that knows the label set (e.g. binary +-1) may
                # legitimately see only some of the classes
                if y.max() >= int(declared):
                    raise ValueError(f"class ids must be < {declared}")
            elif np.any(np.bincount(y) == 0):
                raise ValueError("class ids must be 0..K-1 with every class nonempty")
        else:
            y = y.astype(np.float64)
            if not np.all(np.isfinite(y)):
                raise ValueError("regression targets must be finite")
        if not sp.issparse(X):
            X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.features)

    @property
    def n_classes(self) -> int:
        if self.task != "classification":
            raise ValueError("regression data has no classes")
        return int(self.meta.get("classes", int(self.labels.max()) + 1))

    def dense(self) -> np.ndarray:
        X = self.features
        return X.toarray() if sp.issparse(X) else np.asarray(X)

    def row_norms(self) -> np.ndarray:
        X = self.features
        if sp.issparse(X):
            return np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        return np.linalg.norm(X, axis=1)

    def rows(self, idx) -> np.ndarray:
        """Dense copy of the selected rows."""
        X = self.features[np.asarray(idx)]
        return X.toarray() if sp.issparse(X) else np.array(X)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        y = self.labels[idx]
        if self.task == "classification":
            # keep class ids stable; caller is responsible for nonempty classes
            return _unchecked(self, self.features[idx], y)
        return replace(self, features=self.features[idx], labels=y)


def _unchecked(base, X, y):
    ds = object.__new__(Dataset)
    if not sp.issparse(X):
        X = np.array(X)
        X.setflags(write=False)
    y = np.array(y)
    y.setflags(write=False)
    object.__setattr__(ds, "features", X)
    object.__setattr__(ds, "labels", y)
    object.__setattr__(ds, "task", base.task)
    object.__setattr__(ds, "meta", dict(base.meta))
    return ds


@dataclass(frozen=True)
class ClassPartition:
    """Disjoint groups of point indices, one per class (or label bin)."""

    groups: list  # list of (class id, index array)
    ratios: np.ndarray

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(g) for _, g in self.groups], dtype=np.int64)

    def __len__(self):
        return len(self.groups)


def _maybe_dense(X):
    if X.nnz > DENSE_THRESHOLD * X.shape[0] * X.shape[1]:
        return X.toarray()
    return X


def _remap_labels(raw):
    """Map binary {-1,+1} to {0,1} and other integral labels to 0..K-1."""
    values = np.unique(raw)
    if set(values.tolist()) <= {-1.0, 1.0}:
        return (raw > 0).astype(np.int64)
    lookup = {v: k for k, v in enumerate(values.tolist())}
    return np.array([lookup[v] for v in raw.tolist()], dtype=np.int64)


def load_libsvm(path, n_features=None, task="classification", keep_sparse=None):
    """Read a LIBSVM/SVMlight text file.

    Each nonblank line is ``<label> <idx>:<val> ...`` with 1-based, strictly
    increasing indices. Binary labels in {-1,+1} become {0,1}; other integral
    labels are mapped to ``0..K-1`` in sorted order. Rows stay sparse unless
    the matrix is denser than :data:`DENSE_THRESHOLD` (``keep_sparse``
    forces either representation).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    labels, indptr, indices, data = [], [0], [], []
    max_index = 0
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                labels.append(float(parts[0]))
            except ValueError:
                raise DataFormatError(f"bad label {parts[0]!r}", path, lineno) from None
            prev = 0
            for tok in parts[1:]:
                idx_s, sep, val_s = tok.partition(":")
                if not sep:
                    raise DataFormatError(f"expected idx:val, got {tok!r}", path, lineno)
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise DataFormatError(f"bad entry {tok!r}", path, lineno) from None
                if idx <= prev:
                    raise DataFormatError(
                        "indices must be 1-based and strictly increasing", path, lineno
                    )
                if not np.isfinite(val):
                    raise DataFormatError(f"non-finite value in {tok!r}", path, lineno)
                prev = idx
                indices.append(idx - 1)
                data.append(val)
            max_index = max(max_index, prev)
            indptr.append(len(indices))
    if not labels:
        raise DataFormatError("empty file", path)
    d = max_index if n_features is None else int(n_features)
    if d < max_index:
        raise DataFormatError(f"index {max_index} exceeds n_features={d}", path)
    d = max(d, 1)
    X = sp.csr_matrix(
        (np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64), indptr),
        shape=(len(labels), d),
    )
    if keep_sparse is None:
        X = _maybe_dense(X)
    elif not keep_sparse:
        X = X.toarray()
    raw = np.array(labels)
    meta = {"source": str(path), "format": "libsvm"}
    y = raw
    if task == "classification":
        y = _remap_labels(raw)
        if set(np.unique(raw).tolist()) <= {-1.0, 1.0}:
            meta["classes"] = 2
    return Dataset(X, y, task=task, meta=meta)


def save_libsvm(ds: Dataset, path):
    """Write ``ds`` in LIBSVM format; nonzeros are written with ``repr`` so
    they reload bit-exactly."""
    X = sp.csr_matrix(ds.features)
    X.sort_indices()
    with open(path, "w") as fh:
        for i in range(ds.n):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            label = ds.labels[i]
            head = str(int(label)) if ds.task == "classification" else repr(float(label))
            entries = " ".join(
                f"{j + 1}:{float(v)!r}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi]) if v != 0
            )
            fh.write(f"{head} {entries}".rstrip() + "\n")


def _infer_task(y):
    values = np.unique(y)
    integral = np.all(np.equal(np.mod(values, 1), 0))
    if integral and 2 <= len(values) <= MAX_CLASSES and len(values) < len(y):
        return "classification"
    return "regression"


def load_csv(path, label_column=-1, header=False, task=None):
    """Read a rectangular numeric CSV into a dense :class:`Dataset`.

    The task is regression unless the labels are integral and take between
    2 and 20 distinct values; pass ``task`` to override.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    rows = []
    width = None
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataFormatError(
                    f"ragged row: expected {width} columns, got {len(row)}", path, lineno
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise DataFormatError("non-numeric cell", path, lineno) from None
    if not rows:
        raise DataFormatError("empty file", path)
    table = np.array(rows, dtype=np.float64)
    if width < 2:
        raise DataFormatError("need at least one feature column and one label column", path)
    col = label_column % width
    y = table[:, col]
    X = np.delete(table, col, axis=1)
    task = task or _infer_task(y)
    if task == "classification":
        y = _remap_labels(y)
    return Dataset(X, y, task=task, meta={"source": str(path), "format": "csv"})


def _shrink_to_ball(X):
    """Scale rows with norm > 1 onto the unit sphere, making sure the
    rounded result really has norm <= 1 (so a second pass is a no-op)."""
    norms = np.linalg.norm(X, axis=1)
    big = norms > 1.0
    if not np.any(big):
        return X
    X = X.copy()
    X[big] /= norms[big, None]
    for _ in range(8):
        still = np.linalg.norm(X, axis=1) > 1.0
        if not np.any(still):
            break
        X[still] *= 1.0 - 2.0**-52
    return X


def normalize_rows(ds: Dataset) -> Dataset:
    """Project every row with ``||x_i|| > 1`` onto the unit sphere.

    Rows already inside the unit ball are untouched, so the operation is
    idempotent bit-for-bit.
    """
    X = ds.features
    if sp.issparse(X):
        norms = ds.row_norms()
        if not np.any(norms > 1.0):
            return ds
        X = X.copy()
        for i in np.flatnonzero(norms > 1.0):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            X.data[lo:hi] = _shrink_to_ball(X.data[lo:hi][None, :])[0]
    else:
        X = _shrink_to_ball(np.asarray(X))
        if X is ds.features:
            return ds
    meta = dict(ds.meta, normalization=ds.meta.get("normalization", "rows"))
    return replace(ds, features=X, meta=meta)


def minmax_scale(ds: Dataset) -> Dataset:
    """Divide each feature by its largest absolute value (zero columns kept)."""
    X = ds.features
    if sp.issparse(X):
        scale = np.asarray(abs(X).max(axis=0).todense()).ravel()
    else:
        scale = np.abs(X).max(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    if sp.issparse(X):
        X = sp.csr_matrix(X.multiply(1.0 / scale[None, :]))
    else:
        X = X / scale[None, :]
    return replace(ds, features=X, meta=dict(ds.meta, normalization="minmax"))


def normalize(ds: Dataset, mode="rows") -> Dataset:
    """``"rows"`` projects into the unit ball; ``"minmax"`` rescales each
    feature first and then projects (the gradient bounds need ``||x|| <= 1``
    either way)."""
    if mode == "rows":
        out = normalize_rows(ds)
    elif mode == "minmax":
        out = normalize_rows(minmax_scale(ds))
    elif mode == "none":
        return ds
    else:
        raise ValueError(f"unknown normalization {mode!r}")
    return replace(out, meta=dict(out.meta, normalization=mode))


def partition_by_class(ds: Dataset) -> ClassPartition:
    if ds.task != "classification":
        raise ValueError("partition_by_class needs a classification dataset")
    y = ds.labels
    groups = [(int(c), np.flatnonzero(y == c)) for c in np.unique(y)]
    ratios = np.array([len(g) for _, g in groups], dtype=np.float64) / ds.n
    return ClassPartition(groups, ratios)


def partition_by_quantiles(ds: Dataset, bins=8) -> ClassPartition:
    """Group regression targets into (at most) ``bins`` quantile bins.

    Ties can merge bins, so fewer groups may come back.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    y = np.asarray(ds.labels, dtype=np.float64)
    edges = np.quantile(y, np.linspace(0, 1, bins + 1)[1:-1])
    which = np.searchsorted(edges, y, side="right")
    groups = []
    for b in np.unique(which):
        groups.append((len(groups), np.flatnonzero(which == b)))
    ratios = np.array([len(g) for _, g in groups], dtype=np.float64) / ds.n
    return ClassPartition(groups, ratios)


def partition(ds: Dataset, bins=8) -> ClassPartition:
    if ds.task == "classification":
        return partition_by_class(ds)
    return partition_by_quantiles(ds, bins)


def train_test_split(ds: Dataset, test_fraction=0.5, seed=0):
    """Seeded random split, stratified by class for classification."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    if ds.task == "classification":
        test = []
        for _, g in partition_by_class(ds).groups:
            g = rng.permutation(g)
            k = int(round(test_fraction * len(g)))
            test.extend(g[:k].tolist())
        test = np.sort(np.array(test, dtype=np.int64))
    else:
        perm = rng.permutation(ds.n)
        test = np.sort(perm[: int(round(test_fraction * ds.n))])
    train = np.setdiff1d(np.arange(ds.n), test)
    return ds.subset(train), ds.subset(test)
