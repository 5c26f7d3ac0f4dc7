"""Command-line front end: ``icrloss <command> [flags]``.

Every command writes its outputs plus a ``run_manifest.json`` into ``--out``
(default: ``$ICRLOSS_OUT`` or ``./icrloss-out``) and nowhere else.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 config
validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from collections.abc import Sequence
from pathlib import Path

from . import __version__
from . import annotations as ann
from . import gradcheck, landscape, simulate
from ._io import write_csv, write_json
from .icr import IcrConfig
from .losses import LossKind

log = logging.getLogger("icrloss")

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3

OUT_ENV = "ICRLOSS_OUT"
DEFAULT_OUT = "icrloss-out"
MANIFEST_NAME = "run_manifest.json"
SWEEP_GRID = "1.0,1.25,1.5,1.75,2.0,2.25,2.5,2.75,3.0"


class UsageError(Exception):
    """Bad flag values detected after argparse has run."""


class ConfigFailure(Exception):
    pass


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Collects outputs for one invocation and writes the manifest last."""

    def __init__(self, command: str, out: Path, config: dict):
        self.command = command
        self.out = out
        self.config = config
        self.outputs: list[Path] = []

    def add(self, paths: Path | Sequence[Path]) -> None:
        self.outputs.extend([paths] if isinstance(paths, Path) else paths)

    def finish(self) -> Path:
        manifest = {
            "command": self.command,
            "config_hash": config_hash(self.config),
            "outputs": sorted(p.relative_to(self.out).as_posix() for p in self.outputs),
            "tool_version": __version__,
            "config": self.config,
        }
        return write_json(self.out / MANIFEST_NAME, manifest)


def _emit(args, report: dict, text: str) -> None:
    if args.format == "json":
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(text)


def _flag_error(flag: str, exc: Exception) -> ConfigFailure:
    return ConfigFailure(f"{flag}: {exc}")


# -- argument types ----------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _finite_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if v != v or v in (float("inf"), float("-inf")):
        raise argparse.ArgumentTypeError(f"expected a finite number, got {text!r}")
    return v


def _image_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError(f"image size must be positive, got {text!r}")
    return w, h


def parse_deltas(text: str) -> list[float]:
    """Comma list of deltas, deduplicated in first-seen order."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise UsageError("--deltas: delta list is empty")
    values = []
    for p in parts:
        try:
            values.append(_finite_float(p))
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"--deltas: {exc}") from None
    unique = list(dict.fromkeys(values))
    if len(unique) < len(values):
        log.warning("--deltas: dropped %d duplicate value(s)", len(values) - len(unique))
    return unique


# -- shared helpers ----------------------------------------------------------


def _scenario(args) -> dict:
    try:
        return simulate.load_scenario(args.scenario)
    except simulate.ConfigError as exc:
        raise _flag_error("--scenario", exc) from None


def _delta(args) -> float | None:
    if args.delta is not None and not args.icr:
        raise UsageError("--delta requires --icr")
    if not args.icr:
        return None
    return args.delta if args.delta is not None else IcrConfig().delta


def _sim_config(args, scenario: dict, delta: float | None) -> simulate.SimConfig:
    overrides = {}
    if getattr(args, "step_size", None) is not None:
        overrides["step_size"] = args.step_size
    if getattr(args, "max_iters", None) is not None:
        overrides["max_iters"] = args.max_iters
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    d = dict(scenario, **overrides)
    d["kind"] = args.loss
    d["icr"] = None if delta is None else {"delta": delta}
    try:
        return simulate.SimConfig.from_dict(d)
    except simulate.ConfigError as exc:
        flag = "--delta" if "delta" in str(exc) else "--scenario"
        raise _flag_error(flag, exc) from None


# -- commands ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    delta = _delta(args)
    scenario = _scenario(args)
    cfg = _sim_config(args, scenario, delta)
    run = Run("simulate", args.out, {"sim": cfg.to_dict(), "seeds": args.seeds})
    if args.seeds is None:
        trajs = [simulate.run(cfg)]
    else:
        trajs = simulate.randomized_suite(cfg, args.seeds)
    for t in trajs:
        run.add(simulate.export_trajectory(t, args.out))
    rows = [
        {
            "name": t.name,
            "converged_at": t.converged_at,
            "final_iou": t.final.iou,
            "final_loss": t.final.loss,
            "flat_loss": t.flat_loss,
            "aborted": t.aborted,
        }
        for t in trajs
    ]
    report = {"runs": rows}
    if len(trajs) > 1:
        report["summary"] = simulate.summarize(trajs, delta).__dict__
    run.add(write_json(args.out / "simulate_report.json", report))
    run.finish()

    lines = [f"{'run':40s} {'converged_at':>12s} {'final_iou':>9s}"]
    for r in rows:
        conv = "-" if r["converged_at"] is None else str(r["converged_at"])
        note = ""
        if r["flat_loss"]:
            note = "  flat loss: gradient is zero, prediction never moved"
        elif r["aborted"]:
            note = f"  aborted: {r['aborted']}"
        lines.append(f"{r['name']:40s} {conv:>12s} {r['final_iou']:9.4f}{note}")
    _emit(args, report, "\n".join(lines))
    return EXIT_OK


def cmd_landscape(args) -> int:
    if args.compare:
        return _landscape_compare(args)
    scenario = _scenario(args)
    delta = _delta(args)
    if args.both and delta is None:
        delta = IcrConfig().delta
    try:
        base_spec = landscape.canonical_spec(args.grid, args.loss, None, scenario)
    except (simulate.ConfigError, KeyError, TypeError, ValueError) as exc:
        raise _flag_error("--grid" if "range" in str(exc) else "--scenario", exc) from None
    specs = []
    if args.both or delta is None:
        specs.append(base_spec)
    if delta is not None:
        try:
            specs.append(base_spec.with_icr(delta))
        except ValueError as exc:
            raise _flag_error("--delta", exc) from None

    name = scenario.get("scenario", "custom")
    run = Run(
        "landscape", args.out, {"specs": [s.to_dict() for s in specs], "scenario": name}
    )
    grids = []
    for spec in specs:
        g = landscape.evaluate(spec)
        grids.append(g)
        run.add(landscape.export_grid(g, args.out, landscape.grid_name(spec, name)))
    report: dict = {
        "grids": [
            {"name": landscape.grid_name(g.spec, name), "argmin_xy": g.argmin_xy(), "min": float(g.values.min())}
            for g in grids
        ]
    }
    text = [f"{r['name']}: argmin at {r['argmin_xy']}, min {r['min']:.6g}" for r in report["grids"]]
    if len(grids) == 2:
        summary = landscape.compare(grids[0], grids[1]).to_dict()
        report["comparison"] = summary
        run.add(write_json(args.out / f"{name}-{args.loss}-compare.json", summary))
        text.append(_format_comparison(summary))
    run.finish()
    _emit(args, report, "\n".join(text))
    return EXIT_OK


def _format_comparison(summary: dict) -> str:
    return "\n".join(f"  {k:18s} {v}" for k, v in summary.items())


def _landscape_compare(args) -> int:
    paths = [Path(p) for p in args.compare]
    grids = []
    for p in paths:
        try:
            grids.append(landscape.load_grid(p))
        except FileNotFoundError:
            raise UsageError(f"--compare: no such file {p}") from None
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise _flag_error("--compare", f"{p} is not a grid file ({exc})") from None
    try:
        summary = landscape.compare(*grids).to_dict()
    except simulate.ConfigError as exc:
        raise _flag_error("--compare", exc) from None
    run = Run(
        "landscape-compare",
        args.out,
        {"inputs": [_file_digest(p) for p in paths]},
    )
    run.add(write_json(args.out / "compare.json", summary))
    run.finish()
    _emit(args, {"comparison": summary}, _format_comparison(summary))
    return EXIT_OK


def cmd_sweep(args) -> int:
    deltas = parse_deltas(args.deltas)
    scenario = _scenario(args)
    cfg = _sim_config(args, scenario, None)
    try:
        for d in deltas:
            IcrConfig(d, cfg.kind)
    except ValueError as exc:
        raise _flag_error("--deltas", exc) from None
    run = Run("sweep", args.out, {"sim": cfg.to_dict(), "deltas": deltas, "seeds": args.seeds})
    base_row = simulate.summarize(simulate.randomized_suite(cfg, args.seeds))
    rows = simulate.delta_sweep(cfg, deltas, args.seeds)
    stem = f"{cfg.scenario}-{cfg.kind.value}-sweep"
    run.add(write_csv(args.out / f"{stem}.csv", simulate.SWEEP_COLUMNS, [r.as_list() for r in rows]))
    report = {
        "base": {"median_converged_at": base_row.median_converged_at, "convergence_rate": base_row.convergence_rate},
        "rows": [dict(zip(simulate.SWEEP_COLUMNS, r.as_list())) for r in rows],
    }
    control = [r for r in rows if r.delta == 0.0]
    if control:
        c = control[0]
        report["control_matches_base"] = (
            c.median_converged_at == base_row.median_converged_at
            and c.convergence_rate == base_row.convergence_rate
        )
    run.add(write_json(args.out / f"{stem}.json", report))
    run.finish()

    lines = [f"{'delta':>8s} {'median_iter':>12s} {'conv_rate':>10s}"]
    lines.append(f"{'base':>8s} {base_row.median_converged_at:12.1f} {base_row.convergence_rate:10.2f}")
    for r in rows:
        lines.append(f"{r.delta:8.3g} {r.median_converged_at:12.1f} {r.convergence_rate:10.2f}")
    _emit(args, report, "\n".join(lines))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.samples < 1:
        raise UsageError(f"--samples: must be >= 1, got {args.samples}")
    if not args.tol > 0:
        raise UsageError(f"--tol: must be > 0, got {args.tol}")
    kinds = list(LossKind) if args.all else [LossKind.parse(args.loss)]
    run = Run(
        "gradcheck",
        args.out,
        {"kinds": [k.value for k in kinds], "samples": args.samples, "tol": args.tol, "seed": args.seed},
    )
    result = gradcheck.run_checks(kinds, args.samples, args.tol, args.seed)
    report = {
        "n_checks": result.n_checks,
        "n_failures": len(result.failures),
        "tol": args.tol,
        "worst": result.worst.describe(),
        "failures": [f.describe() for f in result.failures[:20]],
    }
    run.add(write_json(args.out / "gradcheck.json", report))
    run.finish()
    w = result.worst
    text = [
        f"{result.n_checks} checks, {len(result.failures)} failures (tol {args.tol:g})",
        f"worst: {w.kind.value}{' +icr' if w.composed else ''} rel_error {w.rel_error():.3e}",
    ]
    if result.failures:
        f = result.failures[0]
        text.append("first failure: " + json.dumps(f.describe()))
    _emit(args, report, "\n".join(text))
    return EXIT_OK if result.ok else EXIT_VERIFY


def _manifest_entries(args) -> list[ann.ManifestEntry]:
    path = Path(args.manifest)
    if not path.is_file():
        raise UsageError(f"--manifest: no such file {path}")
    try:
        entries = ann.read_manifest(path)
    except ValueError as exc:
        raise UsageError(f"--manifest: {exc}") from None
    if not entries:
        raise UsageError(f"--manifest: {path} lists no images")
    return entries


def _label_path(manifest: Path, entry: ann.ManifestEntry) -> Path:
    p = Path(entry.label_path)
    return p if p.is_absolute() else manifest.parent / p


def cmd_dataset_stats(args) -> int:
    _manifest_entries(args)
    manifest = Path(args.manifest)
    try:
        images = ann.load_corpus(manifest)
    except ann.LabelFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except OSError as exc:
        raise UsageError(f"--manifest: {exc}") from None
    stats = ann.compute_stats(images)
    run = Run("dataset-stats", args.out, {"manifest": _file_digest(manifest)})
    run.add(write_json(args.out / "stats.json", stats.to_dict()))
    run.finish()
    _emit(args, stats.to_dict(), stats.format_table())
    return EXIT_OK


def cmd_dataset_validate(args) -> int:
    entries = _manifest_entries(args)
    manifest = Path(args.manifest)
    errors, warnings = [], []
    n_pairs = 0
    for e in entries:
        label = _label_path(manifest, e)
        try:
            img = ann.parse_label_file(label.read_text(), (e.width, e.height), e.image_id)
        except OSError as exc:
            errors.append({"image_id": e.image_id, "file": str(e.label_path), "line": None, "error": str(exc)})
            continue
        except ann.LabelFormatError as exc:
            errors.append({"image_id": e.image_id, "file": str(e.label_path), "line": exc.line, "error": str(exc)})
            continue
        for k, pair in enumerate(img.pairs):
            n_pairs += 1
            ratio = ann.check_containment(pair, img.dims)
            if ratio < 1.0:
                warnings.append(
                    {"image_id": e.image_id, "pair": k, "lines": [2 * k + 1, 2 * k + 2], "ratio": ratio}
                )
    report = {
        "n_images": len(entries),
        "n_pairs": n_pairs,
        "errors": errors,
        "warnings": warnings,
    }
    run = Run("dataset-validate", args.out, {"manifest": _file_digest(manifest)})
    run.add(write_json(args.out / "validate.json", report))
    run.finish()
    text = [f"{len(entries)} images, {n_pairs} pairs, {len(errors)} errors, {len(warnings)} warnings"]
    text += [f"error: {x['file']}: {x['error']}" for x in errors]
    text += [
        f"warning: {x['image_id']} pair {x['pair']} (lines {x['lines'][0]}-{x['lines'][1]}): "
        f"plate containment {x['ratio']:.4f} < 1"
        for x in warnings
    ]
    _emit(args, report, "\n".join(text))
    return EXIT_VERIFY if errors else EXIT_OK


def cmd_dataset_synth(args) -> int:
    lo, hi = args.plates
    if lo < 1 or hi < lo:
        raise UsageError(f"--plates: need 1 <= MIN <= MAX, got {lo} {hi}")
    try:
        spec = ann.SyntheticSpec(
            n_images=args.images,
            plates_per_image=(lo, hi),
            image_sizes=tuple(args.image_size),
            violation_rate=args.violation_rate,
            seed=args.seed,
        )
        images = ann.generate_synthetic(spec)
    except ValueError as exc:
        raise ConfigFailure(f"--violation-rate/--image-size: {exc}") from None
    config = {
        "n_images": spec.n_images,
        "plates_per_image": list(spec.plates_per_image),
        "image_sizes": [list(s) for s in spec.image_sizes],
        "violation_rate": spec.violation_rate,
        "seed": spec.seed,
    }
    run = Run("dataset-synth", args.out, config)
    corpus_manifest = ann.write_corpus(images, args.out)
    run.add(corpus_manifest)
    run.add([args.out / f"labels/{img.image_id}.txt" for img in images])
    stats = ann.compute_stats(images)
    run.add(write_json(args.out / "synth_spec.json", config))
    run.add(write_json(args.out / "stats.json", stats.to_dict()))
    run.finish()
    _emit(
        args,
        {"manifest": corpus_manifest.name, "stats": stats.to_dict()},
        f"wrote {len(images)} images to {args.out}\n{stats.format_table()}",
    )
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--out",
        type=Path,
        default=None,
        help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})",
    )
    common.add_argument("--format", choices=("text", "json"), default="text", help="report format on stdout")

    loss_kinds = [k.value for k in LossKind]
    arm = argparse.ArgumentParser(add_help=False)
    arm.add_argument("--loss", choices=loss_kinds, default="ciou")
    arm.add_argument("--icr", action="store_true", help="add the ICR penalty")
    arm.add_argument("--delta", type=_finite_float, default=None, help="ICR weight (default 2.5)")

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--scenario", default="canonical", help=f"preset {sorted(simulate.SCENARIOS)} or JSON file")

    descent = argparse.ArgumentParser(add_help=False)
    descent.add_argument("--step-size", type=_finite_float, default=None)
    descent.add_argument("--max-iters", type=_positive_int, default=None)
    descent.add_argument("--seed", type=int, default=None, help="first seed of randomized suites")

    p = argparse.ArgumentParser(prog="icrloss", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common, arm, scen, descent], help="gradient-descent trajectories")
    s.add_argument("--seeds", type=_positive_int, default=None, help="run N randomized starts instead of the preset start")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("landscape", parents=[common, arm, scen], help="loss grids over box centers")
    s.add_argument("--grid", type=int, default=101, help="nodes per axis")
    s.add_argument("--both", action="store_true", help="evaluate base and ICR arms and compare them")
    s.add_argument("--compare", nargs=2, metavar=("BASE.json", "ICR.json"), help="compare two exported grids")
    s.set_defaults(func=cmd_landscape)

    s = sub.add_parser("sweep", parents=[common, scen, descent], help="convergence versus ICR weight")
    s.add_argument("--loss", choices=loss_kinds, default="ciou")
    s.add_argument("--deltas", default=SWEEP_GRID, help="comma-separated delta values")
    s.add_argument("--seeds", type=_positive_int, default=20)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("gradcheck", parents=[common], help="analytic vs finite-difference gradients")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--loss", choices=loss_kinds)
    g.add_argument("--all", action="store_true")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--tol", type=_finite_float, default=1e-4)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    d = sub.add_parser("dataset", help="paired plate/vehicle annotation tools")
    dsub = d.add_subparsers(dest="dataset_command", required=True)
    s = dsub.add_parser("stats", parents=[common], help="corpus statistics")
    s.add_argument("--manifest", required=True)
    s.set_defaults(func=cmd_dataset_stats)
    s = dsub.add_parser("validate", parents=[common], help="parse every label file and report problems")
    s.add_argument("--manifest", required=True)
    s.set_defaults(func=cmd_dataset_validate)
    s = dsub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    s.add_argument("--images", type=_positive_int, default=10)
    s.add_argument("--plates", type=int, nargs=2, default=(1, 10), metavar=("MIN", "MAX"))
    s.add_argument("--image-size", type=_image_size, action="append", default=None, help="WxH, repeatable")
    s.add_argument("--violation-rate", type=_finite_float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_dataset_synth)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="warning: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.out is None:
        args.out = Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)
    if getattr(args, "image_size", "absent") is None:
        args.image_size = [(1920, 1080)]
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigFailure as exc:
        print(f"{parser.prog}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
