"""Detection records in JSON Lines, plus a frame-differencing fallback detector.

One JSON object per line, one line per frame::

    {"frame": "f1", "width": 320, "height": 240,
     "boxes": [{"x": 10, "y": 20, "w": 30, "h": 15, "score": 0.9, "label": "car"}]}

Unknown keys are ignored and ``score`` defaults to 1.0.
"""

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, List

import numpy as np
from scipy import ndimage

from .colorcode import BoundingBox
from .errors import InputError, ShapeError
from .imaging import RgbImage

DEFAULT_THRESHOLD = 25
DEFAULT_MIN_AREA = 16


@dataclass(frozen=True)
class DetectionRecord:
    frame_id: str
    width: int
    height: int
    boxes: List[BoundingBox] = field(default_factory=list)

    def __post_init__(self):
        if not self.frame_id:
            raise InputError("frame_id must be non-empty")
        if self.width < 1 or self.height < 1:
            raise InputError(f"frame {self.frame_id}: dimensions must be >= 1, got {self.width}x{self.height}")

    def to_json(self) -> dict:
        return {
            "frame": self.frame_id,
            "width": self.width,
            "height": self.height,
            "boxes": [
                {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "score": b.score, "label": b.label}
                for b in self.boxes
            ],
        }


def _int_field(obj: dict, key: str, lineno: int, where: str = "") -> int:
    if key not in obj:
        raise InputError(f"line {lineno}: missing {where}{key!r}")
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise InputError(f"line {lineno}: {where}{key!r} must be an integer, got {value!r}")
    return int(value)


def _parse_box(raw, lineno: int, k: int) -> BoundingBox:
    where = f"box {k} "
    if not isinstance(raw, dict):
        raise InputError(f"line {lineno}: {where}is not an object")
    x, y, w, h = (_int_field(raw, key, lineno, where) for key in ("x", "y", "w", "h"))
    if w < 1 or h < 1:
        raise InputError(f"line {lineno}: {where}has non-positive extent w={w} h={h}")
    if x < 0 or y < 0:
        raise InputError(f"line {lineno}: {where}has negative origin ({x}, {y})")
    score = raw.get("score", 1.0)
    if isinstance(score, bool) or not isinstance(score, (int, float)):
        raise InputError(f"line {lineno}: {where}score must be a number, got {score!r}")
    label = raw.get("label", "")
    if not isinstance(label, str):
        raise InputError(f"line {lineno}: {where}label must be a string, got {label!r}")
    return BoundingBox(x, y, w, h, float(score), label)


def parse_detections(stream: IO[str] | Iterable[str]) -> Iterator[DetectionRecord]:
    """Yield records in file order; blank lines are skipped."""
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise InputError(f"line {lineno}: expected a JSON object")
        frame = obj.get("frame")
        if not isinstance(frame, str) or not frame:
            raise InputError(f"line {lineno}: 'frame' must be a non-empty string")
        width = _int_field(obj, "width", lineno)
        height = _int_field(obj, "height", lineno)
        if width < 1 or height < 1:
            raise InputError(f"line {lineno}: frame dimensions must be >= 1, got {width}x{height}")
        raw_boxes = obj.get("boxes", [])
        if not isinstance(raw_boxes, list):
            raise InputError(f"line {lineno}: 'boxes' must be a list")
        boxes = [_parse_box(raw, lineno, k) for k, raw in enumerate(raw_boxes)]
        yield DetectionRecord(frame, width, height, boxes)


def dump_detections(records: Iterable[DetectionRecord], stream: IO[str]) -> None:
    for rec in records:
        stream.write(json.dumps(rec.to_json(), separators=(",", ":")) + "\n")


def grayscale(image: RgbImage) -> np.ndarray:
    """Integer mean of the three channels, rounded half up."""
    total = image.pixels.astype(np.int32).sum(axis=-1)
    return (2 * total + 3) // 6


def frame_difference_detect(
    prev: RgbImage,
    curr: RgbImage,
    threshold: int = DEFAULT_THRESHOLD,
    min_area: int = DEFAULT_MIN_AREA,
) -> List[BoundingBox]:
    """Boxes around 4-connected regions where grayscale changed by more than ``threshold``.

    ``min_area`` is the minimum component pixel count.  Boxes come out in
    raster order of each component's first pixel.
    """
    if (prev.width, prev.height) != (curr.width, curr.height):
        raise ShapeError(
            f"frame size mismatch: {prev.width}x{prev.height} vs {curr.width}x{curr.height}"
        )
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold must lie in 0..255, got {threshold}")
    changed = np.abs(grayscale(curr) - grayscale(prev)) > threshold
    # default 2-D structuring element is the 4-neighbourhood; labels follow raster order
    labels, count = ndimage.label(changed)
    if count == 0:
        return []
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    boxes = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        if areas[k] < min_area:
            continue
        ys, xs = sl
        boxes.append(BoundingBox(xs.start, ys.start, xs.stop - xs.start, ys.stop - ys.start, 1.0, "motion"))
    return boxes
