"""Inter-class relational (ICR) penalty.

A small-object prediction is compared against the ground-truth box of the
larger object that should contain it (a plate inside its vehicle). The
containment ratio ``R = |pred ∩ container| / |pred|`` drives a
multiplicative factor ``delta * (1 - R) + 1`` on any IoU-family loss.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box, area, factors, intersection_area
from .losses import (
    LossEval,
    LossKind,
    ciou_alpha,
    intersection_with_grad,
    iou,
    loss_grad,
    loss_value,
)

DEFAULT_DELTA = 2.5


@dataclass(frozen=True)
class IcrConfig:
    delta: float = DEFAULT_DELTA
    base: LossKind = LossKind.CIOU

    def __post_init__(self) -> None:
        object.__setattr__(self, "base", LossKind.parse(self.base))
        if not (np.isfinite(self.delta) and self.delta >= 0):
            raise ValueError(f"delta must be finite and >= 0, got {self.delta!r}")


@dataclass
class IcrEval:
    base_value: float
    ratio: float
    factor: float
    value: float
    grad: np.ndarray = field(repr=False)
    kink: bool = False


def containment_ratio(pred: Box, container: Box) -> float:
    return intersection_area(pred, container) / area(pred)


def containment_ratio_with_grad(pred: Box, container: Box) -> tuple[float, np.ndarray, bool]:
    inter, d_inter, kink = intersection_with_grad(pred, container)
    a = pred.w * pred.h
    d_a = np.array([0.0, 0.0, pred.h, pred.w])
    return inter / a, (d_inter * a - inter * d_a) / (a * a), kink


def icr_factor(ratio: float, delta: float) -> float:
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"containment ratio must lie in [0, 1], got {ratio!r}")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta!r}")
    return delta * (1.0 - ratio) + 1.0


def icr_simple(base_value: float, ratio: float, delta: float) -> float:
    """All-or-nothing form: multiply by ``delta`` whenever ``pred`` leaks out."""
    if not delta > 1:
        raise ValueError(f"the simple ICR form requires delta > 1, got {delta!r}")
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"containment ratio must lie in [0, 1], got {ratio!r}")
    return delta * base_value if ratio < 1.0 else base_value


def icr_loss(pred: Box, gt: Box, container: Box, cfg: IcrConfig = IcrConfig()) -> IcrEval:
    """Composed loss ``factor(R) * L_base`` and its gradient.

    The gradient follows the product rule,
    ``factor * grad(L_base) - delta * L_base * grad(R)``, with the CIoU weight
    frozen as in :func:`icrloss.losses.loss_grad`.
    """
    base = loss_grad(cfg.base, pred, gt)
    ratio, d_ratio, kink = containment_ratio_with_grad(pred, container)
    # Rounding can push the ratio a hair outside [0, 1] for a pred flush
    # with the container.
    ratio = min(max(ratio, 0.0), 1.0)
    factor = icr_factor(ratio, cfg.delta)
    grad = factor * base.grad
    if cfg.delta != 0.0:
        grad = grad - (cfg.delta * base.value) * d_ratio
    return IcrEval(
        base_value=base.value,
        ratio=ratio,
        factor=factor,
        value=factor * base.value,
        grad=grad,
        kink=base.kink or kink,
    )


def icr_value(
    pred: Box, gt: Box, container: Box, cfg: IcrConfig = IcrConfig(), alpha: float | None = None
) -> float:
    """Scalar composed loss through the value-only code path."""
    ratio = min(max(containment_ratio(pred, container), 0.0), 1.0)
    return icr_factor(ratio, cfg.delta) * loss_value(cfg.base, pred, gt, alpha)


def icr_fd_grad(
    pred: Box, gt: Box, container: Box, cfg: IcrConfig = IcrConfig(), step: float = 1e-6
) -> np.ndarray:
    """Central differences of :func:`icr_value`, CIoU weight frozen at ``pred``."""
    alpha = None
    if cfg.base is LossKind.CIOU:
        alpha = ciou_alpha(iou(pred, gt), factors(pred, gt).aspect_term)
    out = np.empty(4)
    p = np.array(pred.as_tuple())
    for j in range(4):
        e = np.zeros(4)
        e[j] = step
        plus = icr_value(Box(*(p + e)), gt, container, cfg, alpha)
        minus = icr_value(Box(*(p - e)), gt, container, cfg, alpha)
        out[j] = (plus - minus) / (2.0 * step)
    return out


@dataclass
class BatchIcrEval:
    value: float
    grad: np.ndarray = field(repr=False)
    missing_containers: int = 0


def mean_icr_loss(
    preds: Sequence[Box],
    gts: Sequence[Box],
    containers: Sequence[Box | None],
    cfg: IcrConfig = IcrConfig(),
) -> BatchIcrEval:
    """Mean composed loss over a batch.

    A ``None`` container means the plate has no paired vehicle; its factor is
    taken as 1 and it is counted in ``missing_containers``.
    """
    if not (len(preds) == len(gts) == len(containers)) or not preds:
        raise ValueError("batch inputs must be non-empty sequences of equal length")
    n = len(preds)
    total = 0.0
    grads = np.empty((n, 4))
    missing = 0
    for k, (p, g, c) in enumerate(zip(preds, gts, containers)):
        if c is None:
            missing += 1
            e: LossEval | IcrEval = loss_grad(cfg.base, p, g)
        else:
            e = icr_loss(p, g, c, cfg)
        total += e.value
        grads[k] = e.grad
    return BatchIcrEval(total / n, grads / n, missing)
