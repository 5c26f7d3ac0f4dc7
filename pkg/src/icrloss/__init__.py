"""IoU-family box regression losses with an inter-class relational penalty.

:func:`icr_loss` is the entry point. The ``simulate`` and ``landscape``
submodules study its behaviour on toy scenes, and ``annotations`` handles
paired plate/vehicle label files.
"""

from .geometry import Box, factors, intersection_area, union_area
from .icr import (
    DEFAULT_DELTA,
    IcrConfig,
    IcrEval,
    containment_ratio,
    icr_factor,
    icr_loss,
    icr_simple,
    mean_icr_loss,
)
from .losses import LossEval, LossKind, fd_grad, iou, loss_grad, loss_value, mean_loss
from .simulate import ConfigError, SimConfig, Trajectory, delta_sweep, randomized_suite, run

__version__ = "0.1.0"

__all__ = [
    "Box",
    "ConfigError",
    "DEFAULT_DELTA",
    "IcrConfig",
    "IcrEval",
    "LossEval",
    "LossKind",
    "SimConfig",
    "Trajectory",
    "containment_ratio",
    "delta_sweep",
    "factors",
    "fd_grad",
    "icr_factor",
    "icr_loss",
    "icr_simple",
    "intersection_area",
    "iou",
    "loss_grad",
    "loss_value",
    "mean_icr_loss",
    "mean_loss",
    "randomized_suite",
    "run",
    "union_area",
]
