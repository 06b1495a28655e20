"""Weighted coresets for incremental gradient methods.

Pipeline: load and normalize a dataset (:mod:`craig.dataset`), bound pairwise
gradient differences (:mod:`craig.metric`), pick a weighted subset by greedy
facility location (:mod:`craig.coreset`), train on it (:mod:`craig.optim`)
and measure how well it stands in for the full data (:mod:`craig.diagnostics`).
"""
from .coreset import (
    Coreset,
    CoresetFormatError,
    FacilityState,
    StopRule,
    allocate_sizes,
    cover_certificate,
    greedy_select,
    load_coreset,
    marginal_gain,
    merge_class_coresets,
    save_coreset,
    select_per_class,
)
from .dataset import (
    ClassPartition,
    DataFormatError,
    Dataset,
    load_csv,
    load_libsvm,
    normalize,
    normalize_rows,
    partition,
    partition_by_class,
    save_libsvm,
    train_test_split,
)
from .diagnostics import error_sweep, estimate_constants, gradient_error, theorem_check
from .metric import (
    DissimilarityBlock,
    ProxyVectors,
    calibrate_scale,
    convex_feature_bounds,
    proxy_bounds,
    softmax_proxy,
)
from .optim import LossModel, MlpModel, Schedule, TrainRun, craig_coreset, solve_optimum, train
from .synthetic import gaussian_blobs, linear_regression

__version__ = "0.1.0"
