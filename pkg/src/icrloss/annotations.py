"""Paired plate/vehicle annotations in YOLO text format.

Each label file lists one record per line, ``class cx cy w h`` with
coordinates normalized to the image size. Records come in consecutive
pairs: a plate (class 0) followed by the vehicle (class 1) that holds it.
Image sizes are not in the label files; they come from a CSV manifest with
columns ``image_id,width,height,label_path``.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .geometry import Box
from .icr import containment_ratio

PLATE = 0
VEHICLE = 1
CLASS_NAMES = {PLATE: "plate", VEHICLE: "vehicle"}
SIZE_CLASSES = ("small", "medium", "large")

# COCO area thresholds in absolute pixels.
SMALL_MAX_AREA = 32 * 32
MEDIUM_MAX_AREA = 96 * 96

# Pixel areas are recovered from normalized coordinates, which picks up
# rounding noise (6/1080 * 1080 != 6 exactly); round before thresholding.
AREA_DECIMALS = 6

MANIFEST_COLUMNS = ["image_id", "width", "height", "label_path"]


class LabelFormatError(ValueError):
    """Malformed label file; ``line`` is the 1-based offending line."""

    def __init__(self, message: str, line: int | None = None, prefix: bool = True):
        super().__init__(f"line {line}: {message}" if prefix and line is not None else message)
        self.line = line


@dataclass(frozen=True)
class AnnotationRecord:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.class_id not in CLASS_NAMES:
            raise ValueError(f"unknown class {self.class_id!r}; expected 0 (plate) or 1 (vehicle)")
        for name in ("cx", "cy", "w", "h"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValueError(f"coordinate {name}={v!r} outside [0, 1]")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"zero-size box (w={self.w!r}, h={self.h!r})")

    def box(self, image_dims: tuple[float, float] = (1.0, 1.0)) -> Box:
        """Box in pixel units (normalized units for the default dims)."""
        W, H = image_dims
        return Box(self.cx * W, self.cy * H, self.w * W, self.h * H)

    def area_px(self, image_dims: tuple[int, int]) -> float:
        W, H = image_dims
        return round((self.w * W) * (self.h * H), AREA_DECIMALS)


Pair = tuple[AnnotationRecord, AnnotationRecord]


@dataclass
class PairedImage:
    image_id: str
    width_px: int
    height_px: int
    pairs: list[Pair] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not (int(self.width_px) == self.width_px > 0 and int(self.height_px) == self.height_px > 0):
            raise ValueError(
                f"image dimensions must be positive integers, got {self.width_px}x{self.height_px}"
            )

    @property
    def dims(self) -> tuple[int, int]:
        return self.width_px, self.height_px


def _format_number(v: float) -> str:
    return np.format_float_positional(v, trim="-")


def format_record(r: AnnotationRecord) -> str:
    return " ".join([str(r.class_id)] + [_format_number(v) for v in (r.cx, r.cy, r.w, r.h)])


def parse_label_file(text: str, image_dims: tuple[int, int], image_id: str = "") -> PairedImage:
    """Parse one label file into plate/vehicle pairs.

    Blank lines are skipped but still counted for line numbers in errors.
    Raises :class:`LabelFormatError` naming the offending line for malformed
    records, out-of-range coordinates, records out of plate-then-vehicle
    order, or a trailing plate with no vehicle.
    """
    records: list[tuple[int, AnnotationRecord]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        fields = raw.split()
        if not fields:
            continue
        if len(fields) != 5:
            raise LabelFormatError(f"expected 5 fields, got {len(fields)}", lineno)
        try:
            class_id = int(fields[0])
            coords = [float(f) for f in fields[1:]]
        except ValueError:
            raise LabelFormatError(f"non-numeric field in {raw.strip()!r}", lineno) from None
        expected = PLATE if len(records) % 2 == 0 else VEHICLE
        if class_id in CLASS_NAMES and class_id != expected:
            raise LabelFormatError(
                f"out-of-order record: expected class {expected} ({CLASS_NAMES[expected]}), "
                f"got {class_id}",
                lineno,
            )
        try:
            records.append((lineno, AnnotationRecord(class_id, *coords)))
        except ValueError as exc:
            raise LabelFormatError(str(exc), lineno) from None
    if len(records) % 2:
        lineno = records[-1][0]
        raise LabelFormatError(f"unpaired record at line {lineno}", lineno, prefix=False)
    pairs = [(records[k][1], records[k + 1][1]) for k in range(0, len(records), 2)]
    return PairedImage(image_id, int(image_dims[0]), int(image_dims[1]), pairs)


def serialize_label_file(image: PairedImage) -> str:
    lines = []
    for plate, vehicle in image.pairs:
        lines.append(format_record(plate))
        lines.append(format_record(vehicle))
    return "".join(line + "\n" for line in lines)


def check_containment(pair: Pair, image_dims: tuple[int, int] = (1, 1)) -> float:
    """Fraction of the plate's area inside its vehicle box.

    The ratio is unchanged by per-axis scaling, so the image size only
    matters for reporting; it is accepted for symmetry with the other
    helpers.
    """
    plate, vehicle = pair
    return containment_ratio(plate.box(image_dims), vehicle.box(image_dims))


def classify_size(record: AnnotationRecord, image_dims: tuple[int, int]) -> str:
    a = record.area_px(image_dims)
    if a < SMALL_MAX_AREA:
        return "small"
    if a < MEDIUM_MAX_AREA:
        return "medium"
    return "large"


@dataclass
class DatasetStats:
    n_images: int
    n_plates: int
    n_vehicles: int
    plates_per_image: tuple[int, int, float]
    min_abs_plate_area_px2: float
    min_rel_plate_area: float
    size_histogram: dict[str, dict[str, int]]
    containment_violations: int

    def to_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "n_plates": self.n_plates,
            "n_vehicles": self.n_vehicles,
            "plates_per_image": {
                "min": self.plates_per_image[0],
                "max": self.plates_per_image[1],
                "mean": self.plates_per_image[2],
            },
            "min_abs_plate_area_px2": self.min_abs_plate_area_px2,
            "min_rel_plate_area": self.min_rel_plate_area,
            "size_histogram": self.size_histogram,
            "containment_violations": self.containment_violations,
        }

    def format_table(self) -> str:
        lo, hi, mean = self.plates_per_image
        rows = [
            ("Plates/Images", f"{self.n_plates:,}/{self.n_images:,}"),
            ("Vehicles", f"{self.n_vehicles:,}"),
            ("No. Plates/Images", f"{lo}~{hi} (Avg: {mean:.2f})"),
            (
                "Min. absolute / relative plate area",
                f"{self.min_abs_plate_area_px2:g}px^2 / {self.min_rel_plate_area:.1e}",
            ),
        ]
        for cls, counts in self.size_histogram.items():
            rows.append(
                (f"{cls} small/medium/large", "/".join(str(counts[s]) for s in SIZE_CLASSES))
            )
        rows.append(("Containment violations", str(self.containment_violations)))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def compute_stats(images: Sequence[PairedImage]) -> DatasetStats:
    if not images:
        raise ValueError("compute_stats needs at least one image")
    hist = {name: {s: 0 for s in SIZE_CLASSES} for name in CLASS_NAMES.values()}
    counts = []
    min_abs = math.inf
    min_rel = math.inf
    violations = 0
    for img in images:
        counts.append(len(img.pairs))
        for plate, vehicle in img.pairs:
            a = plate.area_px(img.dims)
            min_abs = min(min_abs, a)
            min_rel = min(min_rel, plate.w * plate.h)
            hist["plate"][classify_size(plate, img.dims)] += 1
            hist["vehicle"][classify_size(vehicle, img.dims)] += 1
            if check_containment((plate, vehicle), img.dims) < 1.0:
                violations += 1
    n_plates = sum(counts)
    return DatasetStats(
        n_images=len(images),
        n_plates=n_plates,
        n_vehicles=n_plates,
        plates_per_image=(min(counts), max(counts), n_plates / len(images)),
        min_abs_plate_area_px2=min_abs,
        min_rel_plate_area=min_rel,
        size_histogram=hist,
        containment_violations=violations,
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic paired corpus.

    Explicit ``plate_counts``, ``plate_sizes_px`` and ``vehicle_sizes_px``
    are cycled in corpus order and override the random draws, which makes
    golden statistics exact. Only positions (and violation draws) are then
    random.
    """

    n_images: int = 10
    plates_per_image: tuple[int, int] = (1, 10)
    plate_counts: Sequence[int] | None = None
    image_sizes: Sequence[tuple[int, int]] = ((1920, 1080),)
    plate_area_px: tuple[float, float] = (36.0, 12000.0)
    plate_aspect: tuple[float, float] = (2.0, 4.0)
    plate_sizes_px: Sequence[tuple[float, float]] | None = None
    vehicle_scale: tuple[float, float] = (3.0, 6.0)
    vehicle_sizes_px: Sequence[tuple[float, float]] | None = None
    violation_rate: float = 0.0
    seed: int = 0
    max_retries: int = 100

    def __post_init__(self) -> None:
        if self.n_images < 1:
            raise ValueError("n_images must be >= 1")
        if not 0.0 <= self.violation_rate <= 1.0:
            raise ValueError("violation_rate must lie in [0, 1]")
        if self.plate_counts is not None and any(c < 1 for c in self.plate_counts):
            raise ValueError("plate_counts entries must be >= 1")


def _place_pair(rng, spec: SyntheticSpec, W: int, H: int, plate_wh, vehicle_wh, violate: bool):
    pw, ph = plate_wh
    for _ in range(spec.max_retries):
        if vehicle_wh is None:
            sx, sy = rng.uniform(*spec.vehicle_scale, size=2)
            vw, vh = pw * sx, ph * sy
        else:
            vw, vh = vehicle_wh
        if vw >= W or vh >= H or (not violate and (pw >= vw or ph >= vh)):
            continue
        vx = rng.uniform(vw / 2, W - vw / 2)
        vy = rng.uniform(vh / 2, H - vh / 2)
        vbox = Box(vx, vy, vw, vh)
        if not violate:
            # Strictly inside so normalization noise cannot create a violation.
            mx, my = (vw - pw) / 2, (vh - ph) / 2
            px = rng.uniform(vx - 0.9 * mx, vx + 0.9 * mx)
            py = rng.uniform(vy - 0.9 * my, vy + 0.9 * my)
        else:
            # Center the plate near one vehicle edge so that it straddles it.
            side = rng.integers(4)
            t = rng.uniform(-0.4, 0.4)
            if side in (0, 1):
                px = vbox.x1 if side == 0 else vbox.x2
                px += rng.uniform(-0.3, 0.3) * pw
                py = vy + t * vh
            else:
                py = vbox.y1 if side == 2 else vbox.y2
                py += rng.uniform(-0.3, 0.3) * ph
                px = vx + t * vw
        pbox = Box(px, py, pw, ph)
        if pbox.x1 < 0 or pbox.y1 < 0 or pbox.x2 > W or pbox.y2 > H:
            continue
        ratio = containment_ratio(pbox, vbox)
        if violate and not 0.0 < ratio < 0.999:
            continue
        return pbox, vbox
    raise ValueError(
        f"could not place a {pw:g}x{ph:g} plate in a {W}x{H} image after {spec.max_retries} tries"
    )


def _normalized(class_id: int, b: Box, W: int, H: int) -> AnnotationRecord:
    return AnnotationRecord(class_id, b.cx / W, b.cy / H, b.w / W, b.h / H)


def generate_synthetic(spec: SyntheticSpec) -> list[PairedImage]:
    """Deterministic synthetic corpus for ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    images = []
    k = 0
    for n in range(spec.n_images):
        W, H = spec.image_sizes[n % len(spec.image_sizes)]
        if spec.plate_counts is not None:
            count = spec.plate_counts[n % len(spec.plate_counts)]
        else:
            count = int(rng.integers(spec.plates_per_image[0], spec.plates_per_image[1] + 1))
        pairs = []
        for _ in range(count):
            if spec.plate_sizes_px is not None:
                plate_wh = spec.plate_sizes_px[k % len(spec.plate_sizes_px)]
            else:
                a = math.exp(rng.uniform(*np.log(spec.plate_area_px)))
                aspect = rng.uniform(*spec.plate_aspect)
                plate_wh = (math.sqrt(a * aspect), math.sqrt(a / aspect))
            vehicle_wh = None
            if spec.vehicle_sizes_px is not None:
                vehicle_wh = spec.vehicle_sizes_px[k % len(spec.vehicle_sizes_px)]
            violate = spec.violation_rate > 0 and rng.random() < spec.violation_rate
            pbox, vbox = _place_pair(rng, spec, W, H, plate_wh, vehicle_wh, violate)
            pairs.append((_normalized(PLATE, pbox, W, H), _normalized(VEHICLE, vbox, W, H)))
            k += 1
        images.append(PairedImage(f"synth_{n:05d}", W, H, pairs))
    return images


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    width: int
    height: int
    label_path: str


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"manifest {path} is missing columns {sorted(missing)}")
        entries = []
        for row in reader:
            try:
                entries.append(
                    ManifestEntry(row["image_id"], int(row["width"]), int(row["height"]), row["label_path"])
                )
            except ValueError as exc:
                raise ValueError(f"manifest {path}, row {reader.line_num}: {exc}") from None
    return entries


def load_corpus(manifest_path: str | Path) -> list[PairedImage]:
    """Load every label file listed in a manifest.

    Relative label paths resolve against the manifest's directory. Parse
    errors carry the label path in their message.
    """
    manifest_path = Path(manifest_path)
    images = []
    for entry in read_manifest(manifest_path):
        label = Path(entry.label_path)
        if not label.is_absolute():
            label = manifest_path.parent / label
        try:
            images.append(
                parse_label_file(label.read_text(), (entry.width, entry.height), entry.image_id)
            )
        except LabelFormatError as exc:
            raise LabelFormatError(f"{label}: {exc}", exc.line, prefix=False) from None
    return images


def write_corpus(images: Iterable[PairedImage], out_dir: str | Path) -> Path:
    """Write ``labels/<image_id>.txt`` files and ``manifest.csv``."""
    out_dir = Path(out_dir)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_COLUMNS)
    for img in images:
        rel = f"labels/{img.image_id}.txt"
        atomic_write_text(out_dir / rel, serialize_label_file(img))
        writer.writerow([img.image_id, img.width_px, img.height_px, rel])
    return atomic_write_text(out_dir / "manifest.csv", buf.getvalue())
