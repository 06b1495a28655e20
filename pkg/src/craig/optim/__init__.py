"""Losses, schedules, incremental-gradient methods and training loops."""
from .losses import LossModel, signed_labels
from .methods import (
    METHODS,
    Source,
    TrainRun,
    as_source,
    ig_epoch,
    project,
    saga_epoch,
    sgd_epoch,
    svrg_epoch,
)
from .mlp import MlpModel, mlp_forward, mlp_forward_backward, mlp_step
from .schedules import Schedule
from .training import (
    METRIC_COLUMNS,
    craig_coreset,
    evaluate,
    feature_blocks,
    select_by_proxy,
    solve_optimum,
    train,
    train_with_per_epoch_reselection,
    write_metrics_csv,
)

__all__ = [
    "LossModel", "signed_labels", "Schedule", "TrainRun", "Source", "as_source", "project",
    "ig_epoch", "sgd_epoch", "svrg_epoch", "saga_epoch", "METHODS",
    "MlpModel", "mlp_forward", "mlp_forward_backward", "mlp_step",
    "solve_optimum", "craig_coreset", "feature_blocks", "select_by_proxy", "train",
    "train_with_per_epoch_reselection", "evaluate", "write_metrics_csv", "METRIC_COLUMNS",
]
