"""Red/white occupancy masks rendered from vehicle bounding boxes.

Every pixel covered by at least one detection box is red ``(255, 0, 0)``;
everything else is white ``(255, 255, 255)``.  For a frame with a region of
interest the pipeline is: crop to the ROI, render the boxes in ROI
coordinates, then resize to the network input side.
"""

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InputError, ShapeError
from .imaging import RgbImage, resize_nearest

RED = (255, 0, 0)
WHITE = (255, 255, 255)


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int
    score: float = 1.0
    label: str = ""

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise InputError(f"box {name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.x < 0 or self.y < 0:
            raise InputError(f"box origin must be non-negative, got ({self.x}, {self.y})")
        if self.w < 1 or self.h < 1:
            raise InputError(f"box extents must be >= 1, got w={self.w} h={self.h}")

    def clamp(self, width: int, height: int) -> Optional["BoundingBox"]:
        """Intersection with a ``width x height`` frame, or ``None`` if empty."""
        x1, y1 = min(self.x + self.w, width), min(self.y + self.h, height)
        if self.x >= x1 or self.y >= y1:
            return None
        return BoundingBox(self.x, self.y, x1 - self.x, y1 - self.y, self.score, self.label)

    def shifted(self, dx: int, dy: int) -> Optional["BoundingBox"]:
        """Translate by ``(dx, dy)``, trimming whatever falls left of / above zero."""
        x, y = self.x + dx, self.y + dy
        x0, y0 = max(x, 0), max(y, 0)
        x1, y1 = x + self.w, y + self.h
        if x0 >= x1 or y0 >= y1:
            return None
        return BoundingBox(x0, y0, x1 - x0, y1 - y0, self.score, self.label)

    def flip_horizontal(self, width: int) -> Optional["BoundingBox"]:
        c = self.clamp(width, 10**9)
        return None if c is None else BoundingBox(width - c.x - c.w, c.y, c.w, c.h, c.score, c.label)

    def flip_vertical(self, height: int) -> Optional["BoundingBox"]:
        c = self.clamp(10**9, height)
        return None if c is None else BoundingBox(c.x, height - c.y - c.h, c.w, c.h, c.score, c.label)


@dataclass(frozen=True)
class Roi:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0 or self.w < 1 or self.h < 1:
            raise InputError(f"invalid ROI {self.x},{self.y},{self.w},{self.h}")

    @classmethod
    def parse(cls, text: str) -> "Roi":
        parts = text.split(",")
        if len(parts) != 4:
            raise InputError(f"ROI must be X,Y,W,H, got {text!r}")
        try:
            return cls(*(int(p) for p in parts))
        except ValueError as exc:
            raise InputError(f"ROI must be four integers, got {text!r}") from exc

    def check_inside(self, width: int, height: int) -> None:
        if self.x + self.w > width or self.y + self.h > height:
            raise InputError(
                f"ROI {self.x},{self.y},{self.w},{self.h} exceeds the {width}x{height} frame"
            )


def render_mask(boxes: Iterable[BoundingBox], width: int, height: int) -> RgbImage:
    if width < 1 or height < 1:
        raise ShapeError(f"mask frame must be at least 1x1, got {width}x{height}")
    occupied = np.zeros((height, width), dtype=bool)
    for box in boxes:
        occupied[box.y : box.y + box.h, box.x : box.x + box.w] = True
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[...] = WHITE
    px[occupied] = RED
    return RgbImage(px)


def apply_roi(image: RgbImage, roi: Roi) -> RgbImage:
    roi.check_inside(image.width, image.height)
    return RgbImage(image.pixels[roi.y : roi.y + roi.h, roi.x : roi.x + roi.w].copy())


def occupancy_ratio(mask: RgbImage) -> float:
    """Fraction of red pixels in a red/white mask."""
    px = mask.pixels
    red = np.all(px == RED, axis=-1)
    white = np.all(px == WHITE, axis=-1)
    if not np.all(red | white):
        y, x = np.argwhere(~(red | white))[0]
        raise InputError(f"not a red/white mask: pixel ({x}, {y}) is {tuple(int(c) for c in px[y, x])}")
    return int(red.sum()) / red.size


def mask_for_frame(
    boxes: Sequence[BoundingBox],
    width: int,
    height: int,
    roi: Optional[Roi] = None,
    size: Optional[int] = None,
) -> RgbImage:
    """Crop-to-ROI, render in ROI coordinates, then resize to ``size x size``."""
    if roi is not None:
        roi.check_inside(width, height)
        local = [b.shifted(-roi.x, -roi.y) for b in boxes]
        boxes = [b for b in local if b is not None]
        width, height = roi.w, roi.h
    mask = render_mask(boxes, width, height)
    if size is not None:
        mask = resize_nearest(mask, size, size)
    return mask
