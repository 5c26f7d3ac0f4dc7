"""IoU, GIoU, DIoU and CIoU losses with analytic gradients.

Gradients are taken with respect to the predicted box parameters
``(cx, cy, w, h)``; the ground-truth box is a constant. The losses are
piecewise smooth because of the min/max terms in intersection and
enclosing-box extents. Each component of the returned gradient is the
one-sided derivative along the positive direction of that parameter, which
coincides with the ordinary partial derivative in general position. When
any min/max is evaluated at a tie the result carries ``kink=True``.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box, factors, overlap_1d, span_1d

_FOUR_OVER_PI_SQ = 4.0 / math.pi**2

# d(corner)/d(cx, cy, w, h)
_D_CX = np.array([1.0, 0.0, 0.0, 0.0])
_D_CY = np.array([0.0, 1.0, 0.0, 0.0])
_D_W = np.array([0.0, 0.0, 1.0, 0.0])
_D_H = np.array([0.0, 0.0, 0.0, 1.0])
_D_X1 = np.array([1.0, 0.0, -0.5, 0.0])
_D_X2 = np.array([1.0, 0.0, 0.5, 0.0])
_D_Y1 = np.array([0.0, 1.0, 0.0, -0.5])
_D_Y2 = np.array([0.0, 1.0, 0.0, 0.5])
_ZERO = np.zeros(4)


class LossKind(enum.Enum):
    IOU = "iou"
    GIOU = "giou"
    DIOU = "diou"
    CIOU = "ciou"

    @classmethod
    def parse(cls, name: str | LossKind) -> LossKind:
        if isinstance(name, LossKind):
            return name
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(
                f"unknown loss kind {name!r}; expected one of {[k.value for k in cls]}"
            ) from None


@dataclass
class LossEval:
    value: float
    grad: np.ndarray = field(repr=False)
    kink: bool = False


def _dmin(a, da, b, db):
    if a < b:
        return a, da, False
    if a > b:
        return b, db, False
    return a, np.minimum(da, db), True


def _dmax(a, da, b, db):
    if a > b:
        return a, da, False
    if a < b:
        return b, db, False
    return a, np.maximum(da, db), True


def intersection_with_grad(pred: Box, other: Box) -> tuple[float, np.ndarray, bool]:
    """Intersection area of ``pred`` and a fixed box, with its gradient.

    Returns ``(area, grad, kink)``.
    """
    kink = False
    extents = []
    for lo_p, hi_p, len_p, lo_o, hi_o, len_o, d_lo, d_hi in (
        (pred.x1, pred.x2, pred.w, other.x1, other.x2, other.w, _D_X1, _D_X2),
        (pred.y1, pred.y2, pred.h, other.y1, other.y2, other.h, _D_Y1, _D_Y2),
    ):
        _, dhi, k1 = _dmin(hi_p, d_hi, hi_o, _ZERO)
        _, dlo, k2 = _dmax(lo_p, d_lo, lo_o, _ZERO)
        ext = overlap_1d(lo_p, hi_p, len_p, lo_o, hi_o, len_o)
        ext, dext, k3 = _dmax(ext, dhi - dlo, 0.0, _ZERO)
        kink = kink or k1 or k2 or k3
        extents.append((ext, dext))
    (iw, diw), (ih, dih) = extents
    return iw * ih, diw * ih + iw * dih, kink


def _enclosing_with_grad(pred: Box, gt: Box):
    kink = False
    sides = []
    for lo_p, hi_p, len_p, lo_g, hi_g, len_g, d_lo, d_hi in (
        (pred.x1, pred.x2, pred.w, gt.x1, gt.x2, gt.w, _D_X1, _D_X2),
        (pred.y1, pred.y2, pred.h, gt.y1, gt.y2, gt.h, _D_Y1, _D_Y2),
    ):
        _, dhi, k1 = _dmax(hi_p, d_hi, hi_g, _ZERO)
        _, dlo, k2 = _dmin(lo_p, d_lo, lo_g, _ZERO)
        kink = kink or k1 or k2
        sides.append((span_1d(lo_p, hi_p, len_p, lo_g, hi_g, len_g), dhi - dlo))
    return sides, kink


def iou(pred: Box, gt: Box) -> float:
    f = factors(pred, gt)
    return f.overlap_area / f.union_area


def ciou_alpha(iou_value: float, v: float) -> float:
    """Trade-off weight of the CIoU aspect term; defined as 0 when ``v == 0``."""
    if v == 0.0:
        return 0.0
    return v / ((1.0 - iou_value) + v)


def loss_value(kind: LossKind | str, pred: Box, gt: Box, alpha: float | None = None) -> float:
    """Scalar loss. ``alpha`` overrides the CIoU weight (used to freeze it)."""
    kind = LossKind.parse(kind)
    f = factors(pred, gt)
    i = f.overlap_area / f.union_area
    if kind is LossKind.IOU:
        return 1.0 - i
    if kind is LossKind.GIOU:
        return 1.0 - i + (f.enclosing_area - f.union_area) / f.enclosing_area
    diou = 1.0 - i + f.center_dist_sq / f.enclosing_diag_sq
    if kind is LossKind.DIOU:
        return diou
    if alpha is None:
        alpha = ciou_alpha(i, f.aspect_term)
    return diou + alpha * f.aspect_term


def loss_grad(kind: LossKind | str, pred: Box, gt: Box) -> LossEval:
    """Loss value and gradient w.r.t. ``(cx, cy, w, h)`` of ``pred``.

    For CIoU the weight ``alpha`` is held constant during differentiation.
    """
    kind = LossKind.parse(kind)
    inter, d_inter, kink = intersection_with_grad(pred, gt)
    a_pred = pred.w * pred.h
    d_a_pred = _D_W * pred.h + pred.w * _D_H
    union = a_pred + gt.w * gt.h - inter
    d_union = d_a_pred - d_inter
    i = inter / union
    d_i = (d_inter * union - inter * d_union) / union**2

    if kind is LossKind.IOU:
        return LossEval(1.0 - i, -d_i, kink)

    ((cw, d_cw), (ch, d_ch)), k_enc = _enclosing_with_grad(pred, gt)
    kink = kink or k_enc

    if kind is LossKind.GIOU:
        c_area = cw * ch
        d_c_area = d_cw * ch + cw * d_ch
        value = 1.0 - i + (c_area - union) / c_area
        # d[(C - U) / C] = -d[U / C]
        d_ratio = (d_union * c_area - union * d_c_area) / c_area**2
        return LossEval(value, -d_i - d_ratio, kink)

    dx = pred.cx - gt.cx
    dy = pred.cy - gt.cy
    rho2 = dx * dx + dy * dy
    d_rho2 = 2.0 * dx * _D_CX + 2.0 * dy * _D_CY
    c2 = cw * cw + ch * ch
    d_c2 = 2.0 * cw * d_cw + 2.0 * ch * d_ch
    value = 1.0 - i + rho2 / c2
    grad = -d_i + (d_rho2 * c2 - rho2 * d_c2) / c2**2
    if kind is LossKind.DIOU:
        return LossEval(value, grad, kink)

    diff = math.atan(gt.w / gt.h) - math.atan(pred.w / pred.h)
    v = _FOUR_OVER_PI_SQ * diff * diff
    d_atan_pred = (pred.h * _D_W - pred.w * _D_H) / (pred.w**2 + pred.h**2)
    d_v = -2.0 * _FOUR_OVER_PI_SQ * diff * d_atan_pred
    alpha = ciou_alpha(i, v)
    return LossEval(value + alpha * v, grad + alpha * d_v, kink)


def _perturbed(box: Box, j: int, delta: float) -> Box:
    p = list(box.as_tuple())
    p[j] += delta
    return Box(*p)


def fd_grad(kind: LossKind | str, pred: Box, gt: Box, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of :func:`loss_value`.

    The CIoU weight is frozen at its value at ``pred`` so that the result is
    comparable with :func:`loss_grad`.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    kind = LossKind.parse(kind)
    alpha = None
    if kind is LossKind.CIOU:
        alpha = ciou_alpha(iou(pred, gt), factors(pred, gt).aspect_term)
    out = np.empty(4)
    for j in range(4):
        plus = loss_value(kind, _perturbed(pred, j, step), gt, alpha)
        minus = loss_value(kind, _perturbed(pred, j, -step), gt, alpha)
        out[j] = (plus - minus) / (2.0 * step)
    return out


def mean_loss(kind: LossKind | str, preds: Sequence[Box], gts: Sequence[Box]) -> LossEval:
    """Arithmetic-mean reduction over a batch of (pred, gt) pairs.

    ``grad`` has shape ``(N, 4)``; row ``k`` is the derivative of the mean
    with respect to ``preds[k]``.
    """
    if len(preds) != len(gts) or not preds:
        raise ValueError("preds and gts must be non-empty and of equal length")
    n = len(preds)
    evals = [loss_grad(kind, p, g) for p, g in zip(preds, gts)]
    value = sum(e.value for e in evals) / n
    grad = np.stack([e.grad for e in evals]) / n
    return LossEval(value, grad, any(e.kink for e in evals))
