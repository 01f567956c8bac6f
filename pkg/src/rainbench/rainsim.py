"""Seeded raindrop fields, streak compositing and the rainfall/droplet law.

Randomness comes from numpy's PCG64 bit generator seeded directly with the
caller's 64-bit seed; draws happen in a fixed order (x, y, length, angle), so a
given ``(count, seed, style, width, height)`` always gives the same field.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import BadConfig, NotRgb, OutOfModelDomain
from .imaging import Image, blur_planes, gaussian_kernel, quantize

SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RainMapping:
    """Linear law ``rainfall_mm_h = slope * droplets + intercept``."""

    slope: float = 0.03
    intercept: float = 3.88

    def __post_init__(self):
        if not (self.slope > 0 and math.isfinite(self.slope)):
            raise ValueError(f"slope must be positive, got {self.slope}")

    @classmethod
    def from_fit_file(cls, path) -> "RainMapping":
        """Read ``slope=`` / ``intercept=`` from a calibration fit file."""
        from .calibrate import read_fit

        fit = read_fit(path)
        return cls(slope=fit.slope, intercept=fit.intercept)


def rainfall_to_droplets(omega: float, m: RainMapping = RainMapping()) -> int:
    if not math.isfinite(omega) or omega < 0:
        raise ValueError(f"rainfall must be finite and >= 0, got {omega!r}")
    if omega < m.intercept:
        warnings.warn(
            f"{omega} mm/h is below the mapping intercept {m.intercept} mm/h; using 0 droplets",
            OutOfModelDomain,
            stacklevel=2,
        )
        return 0
    return max(0, int(math.floor((omega - m.intercept) / m.slope + 0.5)))


def droplets_to_rainfall(n: int, m: RainMapping = RainMapping()) -> float:
    if n < 0:
        raise ValueError("droplet count must be >= 0")
    return m.slope * n + m.intercept


@dataclass(frozen=True)
class DropletStyle:
    length_mean: float = 12.0
    length_jitter: float = 4.0
    width: float = 1.5
    angle_mean: float = 0.0
    angle_jitter: float = 0.08
    opacity: float = 0.35
    brightness: float = 220.0
    blur_sigma: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.opacity <= 1.0:
            raise ValueError("opacity must lie in (0, 1]")
        if self.length_mean <= 0 or self.width <= 0:
            raise ValueError("length_mean and width must be positive")
        if self.blur_sigma < 0 or self.length_jitter < 0 or self.angle_jitter < 0:
            raise ValueError("blur_sigma and jitters must be >= 0")
        if not 0.0 <= self.brightness <= 255.0:
            raise ValueError("brightness must be an 8-bit value")

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n" for f in dataclasses.fields(self))

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


STYLE_KEYS = tuple(f.name for f in dataclasses.fields(DropletStyle))


def style_from_mapping(values: dict, base: DropletStyle = DropletStyle()) -> DropletStyle:
    kwargs = {}
    for key, raw in values.items():
        if key not in STYLE_KEYS:
            raise BadConfig(f"unknown droplet style key {key!r}")
        try:
            kwargs[key] = float(raw)
        except ValueError:
            raise BadConfig(f"style key {key!r}: not a number: {raw!r}") from None
    try:
        return dataclasses.replace(base, **kwargs)
    except ValueError as exc:
        raise BadConfig(str(exc)) from None


def parse_key_values(text: str, source: str = "<config>") -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadConfig(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise BadConfig(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def load_style(path) -> DropletStyle:
    path = Path(path)
    return style_from_mapping(parse_key_values(path.read_text(), str(path)))


@dataclass(frozen=True)
class Droplet:
    center: tuple
    length: float
    angle: float
    width: float
    opacity: float


@dataclass(frozen=True, eq=False)
class RaindropField:
    """A set of streak primitives; stored column-wise for the rasteriser."""

    seed: int
    cx: np.ndarray
    cy: np.ndarray
    length: np.ndarray
    angle: np.ndarray
    width: np.ndarray
    opacity: np.ndarray
    image_size: tuple = field(default=(0, 0))

    @property
    def count(self) -> int:
        return int(self.cx.shape[0])

    @property
    def droplets(self):
        return [
            Droplet((float(x), float(y)), float(l), float(a), float(w), float(o))
            for x, y, l, a, w, o in zip(self.cx, self.cy, self.length, self.angle, self.width, self.opacity)
        ]

    def __len__(self):
        return self.count

    def __eq__(self, other):
        if not isinstance(other, RaindropField):
            return NotImplemented
        cols = ("cx", "cy", "length", "angle", "width", "opacity")
        return self.seed == other.seed and all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in cols
        )

    @classmethod
    def from_droplets(cls, droplets, seed=0, image_size=(0, 0)) -> "RaindropField":
        cols = [[], [], [], [], [], []]
        for d in droplets:
            for col, v in zip(cols, (d.center[0], d.center[1], d.length, d.angle, d.width, d.opacity)):
                col.append(float(v))
        arrs = [np.asarray(c, dtype=np.float64) for c in cols]
        return cls(seed, *arrs, image_size=image_size)


def generate_field(count: int, seed: int, style: DropletStyle, width: int, height: int) -> RaindropField:
    if count < 0:
        raise ValueError("count must be >= 0")
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    seed = int(seed) & SEED_MASK
    rng = np.random.Generator(np.random.PCG64(seed))
    cx = rng.uniform(0.0, width, count)
    cy = rng.uniform(0.0, height, count)
    length = rng.uniform(style.length_mean - style.length_jitter,
                         style.length_mean + style.length_jitter, count)
    length = np.maximum(length, 0.0)
    angle = rng.uniform(style.angle_mean - style.angle_jitter,
                        style.angle_mean + style.angle_jitter, count)
    sw = np.full(count, float(style.width))
    op = np.full(count, float(style.opacity))
    return RaindropField(seed, cx, cy, length, angle, sw, op, image_size=(width, height))


def alpha_layer(field: RaindropField, width: int, height: int, blur_sigma: float) -> np.ndarray:
    """Per-pixel blend weight in [0, 1]: max streak coverage, optionally defocused."""
    layer = kernels.rasterize_streaks(
        height, width,
        np.ascontiguousarray(field.cx), np.ascontiguousarray(field.cy),
        np.ascontiguousarray(field.length), np.ascontiguousarray(field.angle),
        np.ascontiguousarray(field.width), np.ascontiguousarray(field.opacity),
    )
    if blur_sigma > 0:
        layer = blur_planes(layer, gaussian_kernel(blur_sigma))
        np.clip(layer, 0.0, 1.0, out=layer)
    return layer


def composite(img: Image, field: RaindropField, style: DropletStyle) -> Image:
    """Blend bright, semi-transparent, blurred streaks over an RGB image."""
    if img.channels != 3:
        raise NotRgb("rain compositing needs a 3-channel image")
    if field.count == 0:
        return img
    a = alpha_layer(field, img.width, img.height, style.blur_sigma)[:, :, None]
    base = img.pixels.astype(np.float64)
    out = (1.0 - a) * base + a * float(style.brightness)
    return Image(quantize(out))


def derive_seed(global_seed: int, image_id: str, level: float) -> int:
    """64-bit per-(image, rainfall level) seed from BLAKE2b over a canonical string."""
    token = f"{int(global_seed) & SEED_MASK}|{image_id}|{float(level)!r}".encode()
    return int.from_bytes(hashlib.blake2b(token, digest_size=8).digest(), "little")


def synthesize(img: Image, omega: float, seed: int, style: DropletStyle = DropletStyle(),
               mapping: RainMapping = RainMapping()):
    """Rain for ``omega`` mm/h; returns ``(image, droplet_count)``."""
    n = rainfall_to_droplets(omega, mapping)
    fld = generate_field(n, seed, style, img.width, img.height)
    return composite(img, fld, style), n
