"""Labeled sample manifests, stratified splits and a synthetic mask dataset.

Manifests are CSV files with header ``path,label``.  Labels are
``congested``, ``non_congested`` or ``medium``; medium rows are borderline
scenes and are dropped on load.  Relative paths resolve against the
manifest's directory.
"""

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .colorcode import BoundingBox, render_mask
from .errors import InputError
from .imaging import RgbImage, write_ppm
from .metrics import CONGESTED, LABEL_IDS, LABEL_NAMES, NON_CONGESTED
from .rng import STREAM_SPLIT, STREAM_SYNTH, make_rng

log = logging.getLogger(__name__)

MEDIUM = "medium"


@dataclass(frozen=True)
class LabeledSample:
    image_path: str
    label: str  # "congested" | "non_congested"

    @property
    def label_id(self) -> int:
        return LABEL_IDS[self.label]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 42

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InputError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


@dataclass(frozen=True)
class ManifestStats:
    congested: int
    non_congested: int
    medium_dropped: int

    @property
    def retained(self) -> int:
        return self.congested + self.non_congested


def load_manifest(path, with_stats: bool = False):
    """Read a manifest, dropping medium rows.

    Returns the sample list, or ``(samples, ManifestStats)`` when
    ``with_stats`` is set.
    """
    path = Path(path)
    base = path.parent
    samples: List[LabeledSample] = []
    medium = 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["path", "label"]:
            raise InputError(f"{path}: missing 'path,label' header")
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise InputError(f"{path}: row {rowno}: expected path,label")
            image_path, label = row[0].strip(), row[1].strip()
            if label == MEDIUM:
                medium += 1
                continue
            if label not in LABEL_IDS:
                raise InputError(f"{path}: row {rowno}: unknown label {label!r}")
            p = Path(image_path)
            samples.append(LabeledSample(str(p if p.is_absolute() else base / p), label))
    counts = Counter(s.label for s in samples)
    stats = ManifestStats(counts["congested"], counts["non_congested"], medium)
    log.info(
        "%s: %d congested, %d non_congested, %d medium dropped",
        path, stats.congested, stats.non_congested, stats.medium_dropped,
    )
    return (samples, stats) if with_stats else samples


def write_manifest(samples: Sequence[LabeledSample], path, relative_to=None) -> None:
    path = Path(path)
    root = Path(relative_to) if relative_to is not None else path.parent
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "label"])
        for s in samples:
            p = Path(s.image_path)
            try:
                p = p.relative_to(root)
            except ValueError:
                pass
            w.writerow([p.as_posix(), s.label])


def _quotas(class_sizes: Sequence[int], k: int) -> List[int]:
    """Largest-remainder apportionment of ``k`` training slots across classes."""
    n = sum(class_sizes)
    exact = [size * k / n for size in class_sizes]
    quotas = [math.floor(e) for e in exact]
    order = sorted(range(len(exact)), key=lambda i: (-(exact[i] - quotas[i]), i))
    for i in order[: k - sum(quotas)]:
        quotas[i] += 1
    return quotas


def split(samples: Sequence, spec: SplitSpec, label_of=None) -> Tuple[list, list]:
    """Stratified, seeded train/validation partition.

    ``floor(n * train_fraction)`` samples go to train, apportioned across
    classes by largest remainder so each class ratio is kept within one
    sample.  Both halves keep the input order.  ``label_of`` extracts the
    class from an item (default: ``.label``).
    """
    if len(samples) < 2:
        raise InputError("split needs at least 2 samples")
    label_of = label_of or (lambda s: s.label)
    k = math.floor(len(samples) * spec.train_fraction)
    by_class: dict = {}
    for i, s in enumerate(samples):
        by_class.setdefault(label_of(s), []).append(i)
    keys = sorted(by_class, key=str)
    quotas = _quotas([len(by_class[c]) for c in keys], k)
    rng = make_rng(spec.seed, STREAM_SPLIT)
    train_idx = set()
    for c, q in zip(keys, quotas):
        members = np.asarray(by_class[c])
        train_idx.update(int(i) for i in rng.permutation(members)[:q])
    train = [s for i, s in enumerate(samples) if i in train_idx]
    val = [s for i, s in enumerate(samples) if i not in train_idx]
    return train, val


# --------------------------------------------------------------------------
# Synthetic data
# --------------------------------------------------------------------------

CONGESTED_BOXES = (12, 25)
NON_CONGESTED_BOXES = (0, 5)
BOX_SIDE_FRACTION = (0.08, 0.20)


@dataclass(frozen=True)
class SynthSample:
    mask: RgbImage
    label: int
    boxes: Tuple[BoundingBox, ...]

    def __iter__(self):
        # unpack as (mask, label)
        return iter((self.mask, self.label))


def _random_boxes(rng, count: int, side: int) -> List[BoundingBox]:
    lo = max(1, math.ceil(BOX_SIDE_FRACTION[0] * side))
    hi = max(lo, math.floor(BOX_SIDE_FRACTION[1] * side))
    boxes = []
    for _ in range(count):
        w, h = (int(v) for v in rng.integers(lo, hi + 1, size=2))
        x, y = (int(v) for v in rng.integers(0, side, size=2))
        boxes.append(BoundingBox(x, y, w, h, 1.0, "vehicle"))
    return boxes


def synth_generate(n_per_class: int, frame_side: int, seed: int) -> List[SynthSample]:
    """Random red/white masks, alternating congested and non-congested.

    Congested frames draw 12-25 boxes, non-congested 0-5; box sides are
    uniform integers in [8%, 20%] of ``frame_side``; boxes may overlap and
    run off the right/bottom edge (clamped when rendered).
    """
    if frame_side < 32:
        raise InputError(f"frame_side must be >= 32, got {frame_side}")
    rng = make_rng(seed, STREAM_SYNTH)
    out: List[SynthSample] = []
    for _ in range(n_per_class):
        for label, (lo, hi) in ((CONGESTED, CONGESTED_BOXES), (NON_CONGESTED, NON_CONGESTED_BOXES)):
            count = int(rng.integers(lo, hi + 1))
            boxes = _random_boxes(rng, count, frame_side)
            out.append(SynthSample(render_mask(boxes, frame_side, frame_side), label, tuple(boxes)))
    return out


def synth_scene(boxes: Sequence[BoundingBox], side: int, rng: np.random.Generator) -> RgbImage:
    """A crude "camera" rendering of the same boxes: noisy grey road, lane marks,
    and randomly coloured vehicles.  Used as the raw-image counterpart of a mask."""
    road = rng.integers(90, 131)
    px = np.clip(road + rng.normal(0, 12, size=(side, side, 1)), 0, 255)
    px = np.repeat(px, 3, axis=2)
    lane_step = max(side // 4, 1)
    for x in range(lane_step, side, lane_step):
        px[::4, x : x + 1] = 220
    for b in boxes:
        color = rng.integers(0, 256, size=3)
        px[b.y : b.y + b.h, b.x : b.x + b.w] = color
        # windshield band darkens the upper third of the vehicle
        px[b.y : b.y + max(b.h // 3, 1), b.x : b.x + b.w] *= 0.5
    return RgbImage(np.round(px).astype(np.uint8))


def write_synth_dataset(out_dir, n_per_class: int, frame_side: int, seed: int) -> Tuple[Path, Path]:
    """Write ``masks/`` and ``raw/`` pixmaps plus ``masks.csv`` and ``raw.csv``.

    Row ``i`` of both manifests refers to the same scene.
    """
    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    (out / "raw").mkdir(parents=True, exist_ok=True)
    samples = synth_generate(n_per_class, frame_side, seed)
    scene_rng = make_rng(seed, STREAM_SYNTH + 100)
    mask_rows, raw_rows = [], []
    for i, s in enumerate(samples):
        name = f"{i:05d}.ppm"
        label = LABEL_NAMES[s.label]
        write_ppm(s.mask, out / "masks" / name)
        write_ppm(synth_scene(s.boxes, frame_side, scene_rng), out / "raw" / name)
        mask_rows.append(LabeledSample(str(out / "masks" / name), label))
        raw_rows.append(LabeledSample(str(out / "raw" / name), label))
    write_manifest(mask_rows, out / "masks.csv")
    write_manifest(raw_rows, out / "raw.csv")
    return out / "masks.csv", out / "raw.csv"
