"""Matrix Shuffle-Exchange networks for long-range reasoning on 2D grids."""

from .autodiff import Array, backward
from .config import TrainConfig
from .estimator import MatrixSEClassifier
from .harness import benchmark_speed, curriculum_sample, evaluate, train
from .model import (
    ModelParams,
    benes_block,
    init_params,
    matrix_se_forward,
    param_count,
    qsu_forward,
    qswitch_layer,
    recurrent_apply,
)
from .optim import RAdamState, radam_step
from .routing import build_flatten_table, build_qshuffle_table, qrotate, zorder_index

__version__ = "0.1.0"

__all__ = [
    "Array",
    "MatrixSEClassifier",
    "ModelParams",
    "RAdamState",
    "TrainConfig",
    "backward",
    "benchmark_speed",
    "benes_block",
    "build_flatten_table",
    "build_qshuffle_table",
    "curriculum_sample",
    "evaluate",
    "init_params",
    "matrix_se_forward",
    "param_count",
    "qrotate",
    "qsu_forward",
    "qswitch_layer",
    "radam_step",
    "recurrent_apply",
    "train",
    "zorder_index",
]
