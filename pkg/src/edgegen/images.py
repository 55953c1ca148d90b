"""Image value types and portable-anymap / PNG file IO.

MonoImage is the 324x244 8-bit monochrome frame produced by the simulated
low-power imager; ControlImage is the RGB conditioning image handed to a
generation backend. Both are immutable-by-convention wrappers around numpy
arrays: operations never mutate pixel buffers in place.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

MONO_WIDTH = 324
MONO_HEIGHT = 244

CONTROL_MODES = ("canny", "lineart", "segment", "overlay")


@dataclass(frozen=True)
class MonoImage:
    """8-bit grayscale frame, pixels row-major with shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 2:
            raise ParameterError(f"mono image must be 2-D, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    @classmethod
    def frombytes(cls, data: bytes, width: int, height: int) -> "MonoImage":
        if len(data) != width * height:
            raise ParameterError(
                f"pixel buffer is {len(data)} bytes, expected {width * height}")
        arr = np.frombuffer(data, dtype=np.uint8).reshape(height, width)
        return cls(arr.copy())

    def __eq__(self, other):
        return isinstance(other, MonoImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True)
class EdgeMap:
    """Binary edge mask (edge=1), same dimensions as the source image."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.ndim != 2:
            raise ParameterError(f"edge map must be 2-D, got shape {m.shape}")
        object.__setattr__(self, "mask", m)

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]


@dataclass(frozen=True)
class ControlImage:
    """8-bit RGB conditioning image with a tag naming the producing operation."""

    pixels: np.ndarray
    mode: str
    components: int | None = field(default=None, compare=False)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ParameterError(f"control image must be (h, w, 3), got shape {px.shape}")
        if self.mode not in CONTROL_MODES:
            raise ParameterError(f"unknown control mode {self.mode!r}")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        return (isinstance(other, ControlImage) and self.mode == other.mode
                and np.array_equal(self.pixels, other.pixels))


@dataclass(frozen=True)
class AcousticSource:
    """One localized sound emission: position in image pixels, RMS intensity 0..1."""

    x: int
    y: int
    intensity: float

    def __post_init__(self):
        if not 0.0 <= self.intensity <= 1.0:
            raise ParameterError(f"acoustic intensity {self.intensity} outside 0..1")


# --- portable anymap IO ---------------------------------------------------

def _read_pnm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read `count` whitespace-delimited ASCII integers after the magic,
    skipping comment lines. Returns (values, offset past final whitespace)."""
    vals: list[int] = []
    i = 2  # past magic
    n = len(data)
    while len(vals) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < n and not data[j:j + 1].isspace():
            j += 1
        if i == j:
            raise ParameterError("truncated pnm header")
        vals.append(int(data[i:j]))
        i = j
    return vals, i + 1  # single whitespace byte terminates the header


def write_pgm(img: MonoImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.tobytes()


def read_pgm(data: bytes) -> MonoImage:
    if data[:2] != b"P5":
        raise ParameterError("not a P5 portable graymap")
    (w, h, maxval), off = _read_pnm_tokens(data, 3)
    if maxval != 255:
        raise ParameterError(f"unsupported pgm maxval {maxval}")
    return MonoImage.frombytes(data[off:off + w * h], w, h)


def write_ppm(img: ControlImage) -> bytes:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def read_ppm(data: bytes, mode: str = "overlay") -> ControlImage:
    if data[:2] != b"P6":
        raise ParameterError("not a P6 portable pixmap")
    (w, h, maxval), off = _read_pnm_tokens(data, 3)
    if maxval != 255:
        raise ParameterError(f"unsupported ppm maxval {maxval}")
    buf = data[off:off + w * h * 3]
    if len(buf) != w * h * 3:
        raise ParameterError("truncated ppm pixel data")
    arr = np.frombuffer(buf, dtype=np.uint8).reshape(h, w, 3)
    return ControlImage(arr.copy(), mode=mode)


def load_pgm(path) -> MonoImage:
    with open(path, "rb") as f:
        return read_pgm(f.read())


def save_pgm(img: MonoImage, path) -> None:
    with open(path, "wb") as f:
        f.write(write_pgm(img))


def save_ppm(img: ControlImage, path) -> None:
    with open(path, "wb") as f:
        f.write(write_ppm(img))


def load_ppm(path, mode: str = "overlay") -> ControlImage:
    with open(path, "rb") as f:
        return read_ppm(f.read(), mode=mode)


# --- PNG via Pillow --------------------------------------------------------

def rgb_to_png(pixels: np.ndarray) -> bytes:
    from PIL import Image

    im = Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="RGB")
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def png_to_rgb(data: bytes) -> np.ndarray:
    from PIL import Image

    im = Image.open(io.BytesIO(data))
    return np.asarray(im.convert("RGB"), dtype=np.uint8)
