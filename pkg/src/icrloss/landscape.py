"""Loss surfaces over predicted-box center positions at a fixed box shape."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._io import write_csv, write_json
from .geometry import Box
from .icr import IcrConfig, containment_ratio, icr_loss
from .losses import LossKind, loss_grad
from .simulate import SCENARIOS, ConfigError


@dataclass(frozen=True)
class GridSpec:
    x_range: tuple[float, float, int]
    y_range: tuple[float, float, int]
    pred_shape: tuple[float, float]
    gt: Box
    container: Box
    kind: LossKind = LossKind.CIOU
    icr: IcrConfig | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LossKind.parse(self.kind))
        for name in ("x_range", "y_range"):
            lo, hi, n = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or not hi > lo:
                raise ConfigError(f"{name} needs finite bounds with hi > lo, got {(lo, hi)}")
            if int(n) != n or n < 2:
                raise ConfigError(f"{name} needs at least 2 nodes, got {n!r}")
            object.__setattr__(self, name, (float(lo), float(hi), int(n)))
        w, h = self.pred_shape
        if not (w > 0 and h > 0):
            raise ConfigError(f"pred_shape must be positive, got {self.pred_shape}")
        if self.icr is not None and self.icr.base is not self.kind:
            raise ConfigError("icr base loss does not match kind")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(*self.x_range)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(*self.y_range)

    def with_icr(self, delta: float | None) -> GridSpec:
        return replace(self, icr=None if delta is None else IcrConfig(delta, self.kind))

    def to_dict(self) -> dict:
        return {
            "x_range": list(self.x_range),
            "y_range": list(self.y_range),
            "pred_shape": list(self.pred_shape),
            "gt": list(self.gt.as_tuple()),
            "container": list(self.container.as_tuple()),
            "kind": self.kind.value,
            "icr": None if self.icr is None else {"delta": self.icr.delta},
        }

    @classmethod
    def from_dict(cls, d: dict) -> GridSpec:
        kind = LossKind.parse(d["kind"])
        icr = d.get("icr")
        return cls(
            x_range=tuple(d["x_range"]),
            y_range=tuple(d["y_range"]),
            pred_shape=tuple(d["pred_shape"]),
            gt=Box(*d["gt"]),
            container=Box(*d["container"]),
            kind=kind,
            icr=None if icr is None else IcrConfig(float(icr["delta"]), kind),
        )


def canonical_spec(
    n: int = 101, kind: LossKind | str = LossKind.CIOU, delta: float | None = None, scenario: dict | None = None
) -> GridSpec:
    """Square grid over [-100, 100]^2 around the canonical scenario.

    With odd ``n`` the grid spacing divides the gt center, so the target is
    itself a node. The prediction has the gt's shape.
    """
    sc = SCENARIOS["canonical"] if scenario is None else scenario
    gt = Box(*sc["gt"])
    kind = LossKind.parse(kind)
    return GridSpec(
        x_range=(-100.0, 100.0, n),
        y_range=(-100.0, 100.0, n),
        pred_shape=(gt.w, gt.h),
        gt=gt,
        container=Box(*sc["container"]),
        kind=kind,
        icr=None if delta is None else IcrConfig(delta, kind),
    )


@dataclass
class Grid:
    """Row ``i`` is ``ys[i]``, column ``j`` is ``xs[j]``."""

    values: np.ndarray = field(repr=False)
    grad_mag: np.ndarray = field(repr=False)
    ratio: np.ndarray = field(repr=False)
    spec: GridSpec

    def argmin(self) -> tuple[int, int]:
        i, j = np.unravel_index(np.argmin(self.values), self.values.shape)
        return int(i), int(j)

    def argmin_xy(self) -> tuple[float, float]:
        i, j = self.argmin()
        return float(self.spec.xs[j]), float(self.spec.ys[i])

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "xs": self.spec.xs.tolist(),
            "ys": self.spec.ys.tolist(),
            "values": self.values.tolist(),
            "grad_mag": self.grad_mag.tolist(),
            "ratio": self.ratio.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Grid:
        return cls(
            values=np.asarray(d["values"], dtype=float),
            grad_mag=np.asarray(d["grad_mag"], dtype=float),
            ratio=np.asarray(d["ratio"], dtype=float),
            spec=GridSpec.from_dict(d["spec"]),
        )


def node_eval(spec: GridSpec, x: float, y: float) -> tuple[float, float, float]:
    """``(loss, |grad| over the center, containment ratio)`` at one node."""
    pred = Box(x, y, *spec.pred_shape)
    if spec.icr is None:
        e = loss_grad(spec.kind, pred, spec.gt)
        ratio = containment_ratio(pred, spec.container)
    else:
        e = icr_loss(pred, spec.gt, spec.container, spec.icr)
        ratio = e.ratio
    return e.value, math.hypot(e.grad[0], e.grad[1]), ratio


def evaluate(spec: GridSpec) -> Grid:
    xs, ys = spec.xs, spec.ys
    shape = (len(ys), len(xs))
    values = np.empty(shape)
    grad_mag = np.empty(shape)
    ratio = np.empty(shape)
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            values[i, j], grad_mag[i, j], ratio[i, j] = node_eval(spec, float(x), float(y))
    return Grid(values, grad_mag, ratio, spec)


@dataclass(frozen=True)
class Comparison:
    mean_value_ratio: float
    max_value_ratio: float
    mean_grad_ratio: float
    n_outside: int
    argmin_agrees: bool
    dominates: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compare(base: Grid, icr: Grid) -> Comparison:
    """Summary of ``icr`` relative to ``base``.

    Ratios are averaged over nodes whose prediction is not fully inside the
    container (``R < 1``) and where the base quantity is non-zero.
    """
    if replace(base.spec, icr=None) != replace(icr.spec, icr=None):
        raise ConfigError("grids were evaluated on different specs")
    outside = base.ratio < 1.0
    vmask = outside & (base.values > 0)
    gmask = outside & (base.grad_mag > 0)
    vr = icr.values[vmask] / base.values[vmask]
    gr = icr.grad_mag[gmask] / base.grad_mag[gmask]
    return Comparison(
        mean_value_ratio=float(vr.mean()) if vr.size else 1.0,
        max_value_ratio=float(vr.max()) if vr.size else 1.0,
        mean_grad_ratio=float(gr.mean()) if gr.size else 1.0,
        n_outside=int(outside.sum()),
        argmin_agrees=base.argmin() == icr.argmin(),
        dominates=bool(np.all(icr.values >= base.values)),
    )


def ray_profile(
    spec: GridSpec, angle: float, length: float = 150.0, n: int = 200
) -> dict[str, np.ndarray]:
    """Loss profiles with and without the penalty along a ray leaving the gt center.

    ``spec.icr`` supplies the penalty weight (default 2.5 when absent).
    """
    cfg = spec.icr if spec.icr is not None else IcrConfig(base=spec.kind)
    t = np.linspace(0.0, length, n)
    base = np.empty(n)
    composed = np.empty(n)
    ratio = np.empty(n)
    for k, d in enumerate(t):
        pred = Box(
            spec.gt.cx + d * math.cos(angle), spec.gt.cy + d * math.sin(angle), *spec.pred_shape
        )
        e = icr_loss(pred, spec.gt, spec.container, cfg)
        base[k], composed[k], ratio[k] = e.base_value, e.value, e.ratio
    return {"t": t, "base": base, "icr": composed, "ratio": ratio}


def grid_name(spec: GridSpec, scenario: str = "canonical") -> str:
    arm = "base" if spec.icr is None else "icr"
    return f"{scenario}-{spec.kind.value}-{arm}-grid{spec.x_range[2]}"


def export_grid(grid: Grid, out_dir: str | Path, name: str | None = None) -> list[Path]:
    """CSV matrices (values, grad_mag) headed by the GridSpec as JSON, plus one JSON file."""
    out_dir = Path(out_dir)
    name = name or grid_name(grid.spec)
    preamble = [f"spec {json.dumps(grid.spec.to_dict(), sort_keys=True)}"]
    header = ["y\\x"] + [repr(float(x)) for x in grid.spec.xs]
    paths = []
    for label, mat in (("values", grid.values), ("grad_mag", grid.grad_mag)):
        rows = [[float(y)] + row.tolist() for y, row in zip(grid.spec.ys, mat)]
        paths.append(write_csv(out_dir / f"{name}-{label}.csv", header, rows, preamble))
    paths.append(write_json(out_dir / f"{name}.json", grid.to_dict()))
    return paths


def load_grid(path: str | Path) -> Grid:
    return Grid.from_dict(json.loads(Path(path).read_text()))
