"""Gradient-descent simulation of one predicted box regressing onto a target.

The setting is a single small ground-truth box (a plate) inside a larger
container (its vehicle). The prediction starts somewhere else and follows
plain fixed-step gradient descent on ``(cx, cy, w, h)``.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._io import write_csv, write_json
from .geometry import Box
from .icr import IcrConfig, containment_ratio, icr_loss
from .losses import LossKind, iou, loss_grad

MIN_SIDE = 1e-6
# Outer edge of the start-center annulus, as a scale of the container.
ANNULUS_SCALE = 1.5


class ConfigError(ValueError):
    """Raised for simulation or scenario settings that fail validation."""


# The canonical start sits just below the container. The step size was
# tuned so that plain CIoU crosses IoU 0.5 in 50-100 iterations; see
# demos/02_trajectories.py for the calibration sweep.
SCENARIOS: dict[str, dict] = {
    "canonical": {
        "container": [0.0, 0.0, 100.0, 60.0],
        "gt": [20.0, -10.0, 12.0, 6.0],
        "init": [20.0, -46.0, 30.0, 30.0],
        "step_size": 150.0,
        "max_iters": 100,
        "converge_iou": 0.5,
    },
    # Same geometry, started from the far upper-left corner outside the
    # container. Plain CIoU inflates the box in transit and does not reach
    # IoU 0.5 within 100 iterations at any step size.
    "far-corner": {
        "container": [0.0, 0.0, 100.0, 60.0],
        "gt": [20.0, -10.0, 12.0, 6.0],
        "init": [-80.0, 50.0, 30.0, 30.0],
        "step_size": 150.0,
        "max_iters": 100,
        "converge_iou": 0.5,
    },
    # Prediction disjoint from both target and container: plain IoU has a
    # zero gradient here and never moves.
    "disjoint-far": {
        "container": [0.0, 0.0, 100.0, 60.0],
        "gt": [20.0, -10.0, 12.0, 6.0],
        "init": [-120.0, 80.0, 10.0, 10.0],
        "step_size": 150.0,
        "max_iters": 100,
        "converge_iou": 0.5,
    },
}


@dataclass(frozen=True)
class SimConfig:
    gt: Box
    container: Box
    init: Box
    kind: LossKind = LossKind.CIOU
    icr: IcrConfig | None = None
    step_size: float = SCENARIOS["canonical"]["step_size"]
    max_iters: int = 100
    converge_iou: float = 0.5
    seed: int = 0
    scenario: str = "custom"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LossKind.parse(self.kind))
        if not (math.isfinite(self.step_size) and self.step_size > 0):
            raise ConfigError(f"step_size must be a positive finite number, got {self.step_size!r}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError(f"max_iters must be an integer >= 1, got {self.max_iters!r}")
        if not 0.0 < self.converge_iou <= 1.0:
            raise ConfigError(f"converge_iou must lie in (0, 1], got {self.converge_iou!r}")
        if self.icr is not None and self.icr.base is not self.kind:
            raise ConfigError(
                f"icr base loss {self.icr.base.value!r} does not match kind {self.kind.value!r}"
            )
        if containment_ratio(self.gt, self.container) < 1.0:
            raise ConfigError("gt box must lie entirely inside the container box")

    @property
    def arm(self) -> str:
        return "base" if self.icr is None else "icr"

    def with_icr(self, delta: float | None) -> SimConfig:
        """Copy with the ICR penalty switched on at ``delta`` (``None`` for off)."""
        return replace(self, icr=None if delta is None else IcrConfig(delta, self.kind))

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "gt": list(self.gt.as_tuple()),
            "container": list(self.container.as_tuple()),
            "init": list(self.init.as_tuple()),
            "kind": self.kind.value,
            "icr": None if self.icr is None else {"delta": self.icr.delta},
            "step_size": self.step_size,
            "max_iters": self.max_iters,
            "converge_iou": self.converge_iou,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SimConfig:
        kind = LossKind.parse(d.get("kind", "ciou"))
        icr = d.get("icr")
        try:
            return cls(
                gt=Box(*d["gt"]),
                container=Box(*d["container"]),
                init=Box(*d["init"]),
                kind=kind,
                icr=None if icr is None else IcrConfig(float(icr["delta"]), kind),
                step_size=float(d.get("step_size", SCENARIOS["canonical"]["step_size"])),
                max_iters=int(d.get("max_iters", 100)),
                converge_iou=float(d.get("converge_iou", 0.5)),
                seed=int(d.get("seed", 0)),
                scenario=str(d.get("scenario", "custom")),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid simulation config: {exc}") from exc


def load_scenario(name_or_path: str) -> dict:
    """Return a scenario preset by name, or load one from a JSON file."""
    if name_or_path in SCENARIOS:
        return dict(SCENARIOS[name_or_path], scenario=name_or_path)
    path = Path(name_or_path)
    if not path.is_file():
        raise ConfigError(
            f"unknown scenario {name_or_path!r}; expected one of {sorted(SCENARIOS)} or a JSON file"
        )
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file {path} is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"scenario file {path} must hold a JSON object")
    d.setdefault("scenario", path.stem)
    return d


def scenario_config(
    name_or_path: str = "canonical", kind: LossKind | str = LossKind.CIOU, delta: float | None = None, **overrides
) -> SimConfig:
    d = load_scenario(name_or_path)
    d.update(overrides)
    d["kind"] = LossKind.parse(kind).value
    d["icr"] = None if delta is None else {"delta": delta}
    return SimConfig.from_dict(d)


@dataclass(frozen=True)
class Step:
    iter: int
    box: Box
    loss: float
    iou: float
    ratio: float


@dataclass
class Trajectory:
    steps: list[Step]
    converged_at: int | None
    config: SimConfig
    aborted: str | None = None

    @property
    def final(self) -> Step:
        return self.steps[-1]

    @property
    def flat_loss(self) -> bool:
        """True when the loss never changed, i.e. the prediction never moved."""
        first = self.steps[0].loss
        return self.converged_at is None and all(s.loss == first for s in self.steps)

    @property
    def name(self) -> str:
        c = self.config
        return f"{c.scenario}-{c.kind.value}-{c.arm}-{c.seed}"

    def csv_rows(self) -> list[list]:
        return [
            [s.iter, s.box.cx, s.box.cy, s.box.w, s.box.h, s.loss, s.iou, s.ratio]
            for s in self.steps
        ]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "config": self.config.to_dict(),
            "converged_at": self.converged_at,
            "flat_loss": self.flat_loss,
            "aborted": self.aborted,
            "steps": [
                dict(zip(TRAJECTORY_COLUMNS, row)) for row in self.csv_rows()
            ],
        }


TRAJECTORY_COLUMNS = ["iter", "cx", "cy", "w", "h", "loss", "iou", "ratio"]


def _objective(cfg: SimConfig, box: Box) -> tuple[float, np.ndarray, float]:
    if cfg.icr is None:
        e = loss_grad(cfg.kind, box, cfg.gt)
        return e.value, e.grad, containment_ratio(box, cfg.container)
    e = icr_loss(box, cfg.gt, cfg.container, cfg.icr)
    return e.value, e.grad, e.ratio


def run(cfg: SimConfig) -> Trajectory:
    """Run fixed-step gradient descent for ``cfg.max_iters`` updates.

    Every iterate is recorded, including the initial box at ``iter = 0``.
    Widths and heights are clamped to at least ``1e-6`` after each update.
    A non-finite gradient stops the run; the last good step is kept and the
    reason is stored in ``Trajectory.aborted``.
    """
    box = cfg.init
    steps: list[Step] = []
    converged_at = None
    aborted = None
    for t in range(cfg.max_iters + 1):
        value, grad, ratio = _objective(cfg, box)
        overlap = iou(box, cfg.gt)
        if not math.isfinite(value):
            aborted = f"non-finite loss at iter {t}"
            break
        steps.append(Step(t, box, value, overlap, ratio))
        if converged_at is None and overlap >= cfg.converge_iou:
            converged_at = t
        if t == cfg.max_iters:
            break
        if not np.all(np.isfinite(grad)):
            aborted = f"non-finite gradient at iter {t}: {grad.tolist()}"
            break
        cx, cy, w, h = np.array(box.as_tuple()) - cfg.step_size * grad
        box = Box(cx, cy, max(w, MIN_SIDE), max(h, MIN_SIDE))
    return Trajectory(steps, converged_at, cfg, aborted)


def perturb(cfg: SimConfig, seed: int) -> SimConfig:
    """Randomized start for ``seed``.

    The center is uniform over the rectangular annulus between the container
    and the container scaled by ``ANNULUS_SCALE`` about its own center. Width
    and height are each multiplied by an independent log-uniform factor in
    [1/2, 2].
    """
    rng = np.random.default_rng(seed)
    c = cfg.container
    half_w = ANNULUS_SCALE * c.w / 2
    half_h = ANNULUS_SCALE * c.h / 2
    while True:
        x = rng.uniform(c.cx - half_w, c.cx + half_w)
        y = rng.uniform(c.cy - half_h, c.cy + half_h)
        if not (c.x1 <= x <= c.x2 and c.y1 <= y <= c.y2):
            break
    sw, sh = 2.0 ** rng.uniform(-1.0, 1.0, size=2)
    init = Box(float(x), float(y), cfg.init.w * float(sw), cfg.init.h * float(sh))
    return replace(cfg, init=init, seed=seed)


def randomized_suite(base_cfg: SimConfig, n_seeds: int) -> list[Trajectory]:
    """Runs for seeds ``base_cfg.seed, ..., base_cfg.seed + n_seeds - 1``."""
    if n_seeds < 1:
        raise ConfigError(f"n_seeds must be >= 1, got {n_seeds!r}")
    return [run(perturb(base_cfg, base_cfg.seed + k)) for k in range(n_seeds)]


def censored_iters(trajs: Sequence[Trajectory]) -> np.ndarray:
    """Convergence iterations with non-converged runs mapped to ``max_iters + 1``."""
    return np.array(
        [t.config.max_iters + 1 if t.converged_at is None else t.converged_at for t in trajs],
        dtype=float,
    )


@dataclass(frozen=True)
class SweepRow:
    delta: float | None
    median_converged_at: float
    convergence_rate: float

    def as_list(self) -> list:
        return [self.delta, self.median_converged_at, self.convergence_rate]


def summarize(trajs: Sequence[Trajectory], delta: float | None = None) -> SweepRow:
    iters = censored_iters(trajs)
    rate = sum(t.converged_at is not None for t in trajs) / len(trajs)
    return SweepRow(delta, float(np.median(iters)), rate)


def delta_sweep(base_cfg: SimConfig, deltas: Sequence[float], n_seeds: int) -> list[SweepRow]:
    """One summary row per ``delta``, all over the same seed set."""
    if len(deltas) == 0:
        raise ConfigError("deltas must be non-empty")
    return [
        summarize(randomized_suite(base_cfg.with_icr(d), n_seeds), d) for d in deltas
    ]


SWEEP_COLUMNS = ["delta", "median_converged_at", "convergence_rate"]


def export_trajectory(traj: Trajectory, out_dir: str | Path) -> list[Path]:
    """Write ``<name>.csv`` and ``<name>.json``; returns the written paths."""
    out_dir = Path(out_dir)
    return [
        write_csv(out_dir / f"{traj.name}.csv", TRAJECTORY_COLUMNS, traj.csv_rows()),
        write_json(out_dir / f"{traj.name}.json", traj.to_dict()),
    ]
