"""8-bit RGB images, binary P6 pixmap I/O, nearest-neighbour resize and flips."""

from pathlib import Path

import numpy as np

from .errors import FormatError, ShapeError

_WHITESPACE = b" \t\n\r\v\f"


class RgbImage:
    """A ``height x width`` grid of ``(r, g, b)`` bytes, stored row-major.

    ``pixels`` is a ``uint8`` array of shape ``(height, width, 3)``.
    """

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.asarray(pixels)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ShapeError(f"RgbImage needs a (height, width, 3) array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"RgbImage must be at least 1x1, got {arr.shape[1]}x{arr.shape[0]}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("RgbImage channel values must lie in 0..255")
            arr = arr.astype(np.uint8)
        self.pixels = np.ascontiguousarray(arr)

    @classmethod
    def filled(cls, width: int, height: int, color=(255, 255, 255)) -> "RgbImage":
        if width < 1 or height < 1:
            raise ShapeError(f"image dimensions must be >= 1, got {width}x{height}")
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[...] = color
        return cls(px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __getitem__(self, xy):
        x, y = xy
        return tuple(int(v) for v in self.pixels[y, x])

    def __eq__(self, other):
        if not isinstance(other, RgbImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __repr__(self):
        return f"RgbImage({self.width}x{self.height})"

    def colors(self) -> set:
        return {tuple(int(c) for c in row) for row in np.unique(self.pixels.reshape(-1, 3), axis=0)}


def encode_ppm(image: RgbImage) -> bytes:
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.pixels.tobytes()


def _read_token(data: bytes, pos: int):
    n = len(data)
    while pos < n:
        if data[pos] in _WHITESPACE:
            pos += 1
        elif data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
        pos += 1
    return data[start:pos], pos


def decode_ppm(data: bytes) -> RgbImage:
    """Decode a binary P6 pixmap with maxval 255."""
    if data[:2] != b"P6":
        raise FormatError(f"bad PPM magic: expected b'P6', found {bytes(data[:2])!r}")
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _read_token(data, pos)
        if not token.isdigit():
            raise FormatError(f"PPM header: invalid {name} field {token!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"unsupported PPM maxval {maxval}; only 255 is accepted")
    if width < 1 or height < 1:
        raise FormatError(f"PPM dimensions must be >= 1, got {width}x{height}")
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise FormatError("PPM header must end with a single whitespace byte")
    pos += 1
    expected = width * height * 3
    payload = data[pos : pos + expected]
    if len(payload) < expected:
        raise FormatError(f"truncated PPM payload: expected {expected} bytes, got {len(payload)}")
    px = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return RgbImage(px.copy())


def read_ppm(path) -> RgbImage:
    return decode_ppm(Path(path).read_bytes())


def write_ppm(image: RgbImage, path) -> None:
    Path(path).write_bytes(encode_ppm(image))


def _nearest_index(dst: int, src: int) -> np.ndarray:
    # floor((d + 0.5) * src / dst) in exact integer arithmetic
    d = np.arange(dst, dtype=np.int64)
    return np.minimum(((2 * d + 1) * src) // (2 * dst), src - 1)


def resize_nearest(image: RgbImage, dst_w: int, dst_h: int) -> RgbImage:
    if dst_w < 1 or dst_h < 1:
        raise ShapeError(f"resize target must be >= 1x1, got {dst_w}x{dst_h}")
    if (dst_w, dst_h) == (image.width, image.height):
        return RgbImage(image.pixels.copy())
    ys = _nearest_index(dst_h, image.height)
    xs = _nearest_index(dst_w, image.width)
    return RgbImage(image.pixels[ys][:, xs])


def flip_horizontal(image: RgbImage) -> RgbImage:
    return RgbImage(image.pixels[:, ::-1])


def flip_vertical(image: RgbImage) -> RgbImage:
    return RgbImage(image.pixels[::-1])


def to_tensor(image: RgbImage, dtype=np.float32) -> np.ndarray:
    """``[height, width, 3]`` array with channels scaled into ``[0, 1]``."""
    dt = np.dtype(dtype)
    return image.pixels.astype(dt) / dt.type(255)


def to_batch(images, dtype=np.float32) -> np.ndarray:
    """Stack same-sized images into ``[n, height, width, 3]``."""
    dt = np.dtype(dtype)
    return np.stack([im.pixels for im in images]).astype(dt) / dt.type(255)
