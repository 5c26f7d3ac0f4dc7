"""Axis-aligned boxes and the geometric quantities consumed by the losses.

Boxes are stored in center format ``(cx, cy, w, h)``, the same layout as
YOLO label files. Corner format ``(x1, y1, x2, y2)`` is only a conversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle with strictly positive width and height."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("cx", "cy", "w", "h"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"box {name} must be finite, got {value!r}")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have w > 0 and h > 0, got w={self.w!r}, h={self.h!r}")

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> Box:
        return cls((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)

    @property
    def x1(self) -> float:
        return self.cx - self.w / 2

    @property
    def y1(self) -> float:
        return self.cy - self.h / 2

    @property
    def x2(self) -> float:
        return self.cx + self.w / 2

    @property
    def y2(self) -> float:
        return self.cy + self.h / 2

    def corners(self) -> tuple[float, float, float, float]:
        return self.x1, self.y1, self.x2, self.y2

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.cx, self.cy, self.w, self.h

    def translate(self, dx: float, dy: float) -> Box:
        return Box(self.cx + dx, self.cy + dy, self.w, self.h)

    def scale(self, s: float) -> Box:
        """Scale about the origin (positions and sizes alike)."""
        return Box(self.cx * s, self.cy * s, self.w * s, self.h * s)


@dataclass(frozen=True)
class GeometricFactors:
    """Per-pair terms shared by the IoU-family losses.

    ``overlap_area`` is the intersection, ``center_dist_sq`` the squared
    distance between centers, ``aspect_term`` the CIoU consistency term ``v``
    and ``enclosing_diag_sq`` the squared diagonal of the smallest enclosing
    box.
    """

    overlap_area: float
    center_dist_sq: float
    aspect_term: float
    enclosing_diag_sq: float
    enclosing_area: float
    union_area: float


def area(b: Box) -> float:
    return b.w * b.h


def overlap_1d(lo_a: float, hi_a: float, len_a: float, lo_b: float, hi_b: float, len_b: float) -> float:
    """Signed overlap of two intervals (negative when disjoint).

    A nested interval contributes its own length rather than ``hi - lo`` so
    that containment is exact despite the center/corner round trip.
    """
    if lo_b <= lo_a and hi_a <= hi_b:
        return len_a
    if lo_a <= lo_b and hi_b <= hi_a:
        return len_b
    return min(hi_a, hi_b) - max(lo_a, lo_b)


def span_1d(lo_a: float, hi_a: float, len_a: float, lo_b: float, hi_b: float, len_b: float) -> float:
    """Length of the smallest interval covering both, with the same nesting rule."""
    if lo_b <= lo_a and hi_a <= hi_b:
        return len_b
    if lo_a <= lo_b and hi_b <= hi_a:
        return len_a
    return max(hi_a, hi_b) - min(lo_a, lo_b)


def intersection_area(a: Box, b: Box) -> float:
    iw = overlap_1d(a.x1, a.x2, a.w, b.x1, b.x2, b.w)
    ih = overlap_1d(a.y1, a.y2, a.h, b.y1, b.y2, b.h)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def union_area(a: Box, b: Box) -> float:
    return area(a) + area(b) - intersection_area(a, b)


def enclosing_box(a: Box, b: Box) -> Box:
    """Smallest axis-aligned box containing both inputs."""
    return Box.from_corners(
        min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2)
    )


def aspect_term(pred: Box, gt: Box) -> float:
    d = math.atan(gt.w / gt.h) - math.atan(pred.w / pred.h)
    return 4.0 / math.pi**2 * d * d


def factors(pred: Box, gt: Box) -> GeometricFactors:
    inter = intersection_area(pred, gt)
    cw = span_1d(pred.x1, pred.x2, pred.w, gt.x1, gt.x2, gt.w)
    ch = span_1d(pred.y1, pred.y2, pred.h, gt.y1, gt.y2, gt.h)
    return GeometricFactors(
        overlap_area=inter,
        center_dist_sq=(pred.cx - gt.cx) ** 2 + (pred.cy - gt.cy) ** 2,
        aspect_term=aspect_term(pred, gt),
        enclosing_diag_sq=cw * cw + ch * ch,
        enclosing_area=cw * ch,
        union_area=area(pred) + area(gt) - inter,
    )
