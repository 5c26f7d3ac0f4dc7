"""Analytic-versus-finite-difference gradient checks on random scenes."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from .geometry import Box
from .icr import IcrConfig, icr_fd_grad, icr_loss
from .losses import LossKind, fd_grad, loss_grad

ABS_FLOOR = 1e-7
EDGE_MARGIN = 1e-3


@dataclass(frozen=True)
class Scene:
    pred: Box
    gt: Box
    container: Box


def _edges(b: Box) -> tuple[list[float], list[float]]:
    return [b.x1, b.x2], [b.y1, b.y2]


def general_position(scene: Scene, margin: float = EDGE_MARGIN) -> bool:
    """True when no pred edge lies within ``margin`` of a gt or container edge.

    These are the only places where the min/max terms switch branches.
    """
    px, py = _edges(scene.pred)
    for other in (scene.gt, scene.container):
        ox, oy = _edges(other)
        if min(abs(a - b) for a in px for b in ox) <= margin:
            return False
        if min(abs(a - b) for a in py for b in oy) <= margin:
            return False
    # Zero-width intersections also switch branches.
    for other in (scene.gt, scene.container):
        for lo_p, hi_p, lo_o, hi_o in (
            (scene.pred.x1, scene.pred.x2, other.x1, other.x2),
            (scene.pred.y1, scene.pred.y2, other.y1, other.y2),
        ):
            if abs(min(hi_p, hi_o) - max(lo_p, lo_o)) <= margin:
                return False
    return True


def random_scenes(n: int, seed: int = 0) -> list[Scene]:
    """``n`` general-position scenes; the container always holds the gt."""
    rng = np.random.default_rng(seed)
    scenes: list[Scene] = []
    while len(scenes) < n:
        gw, gh = np.exp(rng.uniform(np.log(0.5), np.log(20.0), size=2))
        gt = Box(*rng.uniform(-10.0, 10.0, size=2), gw, gh)
        # Container margins beyond the gt on each side.
        ml, mr, mb, mt = rng.uniform(0.2, 20.0, size=4)
        container = Box.from_corners(gt.x1 - ml, gt.y1 - mb, gt.x2 + mr, gt.y2 + mt)
        pw, ph = np.exp(rng.uniform(np.log(0.5), np.log(30.0), size=2))
        pred = Box(*(np.array([gt.cx, gt.cy]) + rng.uniform(-30.0, 30.0, size=2)), pw, ph)
        scene = Scene(pred, gt, container)
        if general_position(scene):
            scenes.append(scene)
    return scenes


@dataclass
class CheckResult:
    kind: LossKind
    composed: bool
    scene: Scene
    analytic: np.ndarray
    numeric: np.ndarray

    def rel_error(self) -> float:
        diff = np.abs(self.analytic - self.numeric)
        return float(np.max(diff / np.maximum(np.abs(self.numeric), ABS_FLOOR)))

    def passes(self, tol: float) -> bool:
        diff = np.abs(self.analytic - self.numeric)
        return bool(np.all(diff <= tol * np.abs(self.numeric) + ABS_FLOOR))

    def describe(self) -> dict:
        s = self.scene
        return {
            "kind": self.kind.value,
            "composed": self.composed,
            "pred": list(s.pred.as_tuple()),
            "gt": list(s.gt.as_tuple()),
            "container": list(s.container.as_tuple()),
            "analytic": self.analytic.tolist(),
            "numeric": self.numeric.tolist(),
            "rel_error": self.rel_error(),
        }


def check_scene(kind: LossKind, scene: Scene, delta: float | None = None) -> CheckResult:
    """Compare one gradient; ``delta`` switches to the ICR-composed loss."""
    step = 1e-6 * max(scene.pred.w, scene.pred.h)
    if delta is None:
        analytic = loss_grad(kind, scene.pred, scene.gt).grad
        numeric = fd_grad(kind, scene.pred, scene.gt, step)
    else:
        cfg = IcrConfig(delta, kind)
        analytic = icr_loss(scene.pred, scene.gt, scene.container, cfg).grad
        numeric = icr_fd_grad(scene.pred, scene.gt, scene.container, cfg, step)
    return CheckResult(kind, delta is not None, scene, analytic, numeric)


@dataclass
class SuiteReport:
    n_checks: int
    failures: list[CheckResult]
    worst: CheckResult

    @property
    def ok(self) -> bool:
        return not self.failures


def run_checks(
    kinds: Iterable[LossKind], samples: int, tol: float = 1e-4, seed: int = 0, delta: float = 2.5
) -> SuiteReport:
    """Check base and composed gradients for every kind on ``samples`` scenes."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    scenes = random_scenes(samples, seed)
    failures = []
    worst = None
    n = 0
    for kind in kinds:
        for scene in scenes:
            for d in (None, delta):
                r = check_scene(kind, scene, d)
                n += 1
                if worst is None or r.rel_error() > worst.rel_error():
                    worst = r
                if not r.passes(tol):
                    failures.append(r)
    return SuiteReport(n, failures, worst)
