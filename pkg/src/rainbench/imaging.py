"""8-bit raster images: I/O, luma conversion and separable Gaussian blur."""
from __future__ import annotations

import math
import os
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage, UnidentifiedImageError

from . import kernels
from .errors import CorruptData, InvalidSigma, UnsupportedFormat

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True, eq=False)
class Image:
    """Immutable ``(height, width, channels)`` uint8 raster, channels 1 or 3."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise UnsupportedFormat(f"expected 1 or 3 channels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise UnsupportedFormat("image dimensions must be positive")
        if px.dtype != np.uint8:
            raise UnsupportedFormat(f"expected uint8 samples, got {px.dtype}")
        px = np.ascontiguousarray(px).copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self):
        return self.pixels.shape

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"Image(width={self.width}, height={self.height}, channels={self.channels})"


@dataclass(frozen=True)
class Kernel:
    radius: int
    weights: tuple

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)


IDENTITY_KERNEL = Kernel(0, (1.0,))


def quantize(values: np.ndarray) -> np.ndarray:
    """Round half up and clamp real samples to uint8."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


# -- I/O ----------------------------------------------------------------------

def _read_token(data: bytes, pos: int):
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise CorruptData("truncated PNM header")
    return data[start:pos], pos


def _parse_pnm(data: bytes) -> Image:
    magic = data[:2]
    channels = {b"P5": 1, b"P6": 3}.get(magic)
    if channels is None:
        raise UnsupportedFormat(f"unsupported PNM variant {magic!r}")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise CorruptData(f"bad PNM header field {tok!r}") from None
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedFormat(f"only 8-bit PNM (maxval 255) supported, got maxval {maxval}")
    if width <= 0 or height <= 0:
        raise CorruptData("non-positive PNM dimensions")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise CorruptData("missing whitespace after PNM header")
    pos += 1
    expected = width * height * channels
    body = data[pos:pos + expected]
    if len(body) != expected:
        raise CorruptData(f"PNM body has {len(body)} bytes, expected {expected}")
    arr = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels)
    return Image(arr)


def _load_png(path: Path) -> Image:
    try:
        with PILImage.open(path) as im:
            if im.format != "PNG":
                raise UnsupportedFormat(f"{path}: not a PNG or PNM file")
            mode = im.mode
            if mode not in ("L", "RGB"):
                raise UnsupportedFormat(f"{path}: PNG mode {mode!r} not supported (8-bit L/RGB only)")
            im.load()
            arr = np.asarray(im, dtype=np.uint8)
    except UnidentifiedImageError:
        raise UnsupportedFormat(f"{path}: unrecognised image format") from None
    except (OSError, SyntaxError, zlib.error) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise CorruptData(f"{path}: {exc}") from None
    return Image(arr)


def load_image(path) -> Image:
    """Read an 8-bit PNG (L or RGB) or binary PGM/PPM file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image: {path}")
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head[:2] in (b"P5", b"P6"):
        return _parse_pnm(path.read_bytes())
    if head[:1] == b"P" and head[1:2].isdigit():
        raise UnsupportedFormat(f"{path}: only binary P5/P6 PNM files are supported")
    return _load_png(path)


def _format_for(path: Path, fmt):
    if fmt is not None:
        return fmt.upper()
    suffix = path.suffix.lower()
    if suffix == ".png":
        return "PNG"
    if suffix in (".ppm", ".pgm", ".pnm"):
        return "PPM"
    raise UnsupportedFormat(f"cannot infer image format from {path.name!r}")


def save_image(img: Image, path, format=None) -> None:
    """Write ``img`` as PNG or binary PNM.

    ``format`` is ``"PNG"`` or ``"PPM"``; when omitted it is inferred from the
    suffix. PNM output is P5 for luma and P6 for RGB, except that a ``.pgm``
    destination insists on a single channel.
    """
    path = Path(path)
    fmt = _format_for(path, format)
    if fmt == "PNG":
        mode = "L" if img.channels == 1 else "RGB"
        data = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
        PILImage.fromarray(np.ascontiguousarray(data), mode=mode).save(path, format="PNG")
        return
    if fmt not in ("PPM", "PGM", "PNM"):
        raise UnsupportedFormat(f"unknown output format {format!r}")
    if (fmt == "PGM" or path.suffix.lower() == ".pgm") and img.channels != 1:
        raise UnsupportedFormat("PGM output requires a single-channel image")
    magic = b"P5" if img.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(img.tobytes())
    os.replace(tmp, path)


# -- pixel operations ----------------------------------------------------------

def to_luma(img: Image) -> Image:
    """BT.601 luma, rounded half up. Single-channel input passes through."""
    if img.channels == 1:
        return img
    rgb = img.pixels.astype(np.float64)
    r, g, b = LUMA_WEIGHTS
    y = r * rgb[:, :, 0] + g * rgb[:, :, 1] + b * rgb[:, :, 2]
    return Image(quantize(y))


def gaussian_kernel(sigma: float) -> Kernel:
    if not (isinstance(sigma, (int, float)) and math.isfinite(sigma) and sigma > 0):
        raise InvalidSigma(f"sigma must be positive and finite, got {sigma!r}")
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    w /= w.sum()
    return Kernel(radius, tuple(float(v) for v in w))


def blur_planes(planes: np.ndarray, k: Kernel) -> np.ndarray:
    """Real-valued separable convolution of an ``(h, w)`` or ``(h, w, c)`` array."""
    weights = k.as_array()
    arr = np.asarray(planes, dtype=np.float64)
    if arr.ndim == 2:
        return kernels.convolve2d(arr, weights)
    stacked = kernels.convolve_stack(np.ascontiguousarray(np.moveaxis(arr, 2, 0)), weights)
    return np.moveaxis(stacked, 0, 2)


def convolve_separable(img: Image, k: Kernel) -> Image:
    """Separable convolution with mirror edges, rounded to 8-bit at the end."""
    return Image(quantize(blur_planes(img.pixels, k)))
