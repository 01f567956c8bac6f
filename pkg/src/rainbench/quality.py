"""MSE, PSNR and windowed mean SSIM between two 8-bit images."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .imaging import IDENTITY_KERNEL, Image, Kernel, to_luma
from .kernels import convolve_stack


@dataclass(frozen=True)
class SsimParams:
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0
    window_radius: int = 5
    window_sigma: float = 1.5

    def __post_init__(self):
        if not (self.k1 > 0 and self.k2 > 0 and self.dynamic_range > 0):
            raise ValueError("k1, k2 and dynamic_range must be positive")
        if self.window_radius < 0:
            raise ValueError("window_radius must be >= 0")
        if self.window_sigma <= 0:
            raise ValueError("window_sigma must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2

    def window(self) -> np.ndarray:
        """Normalised 1-D window weights of length ``2 * window_radius + 1``.

        The Gaussian is truncated (or extended) to ``window_radius`` rather
        than the ``ceil(3 sigma)`` radius :func:`gaussian_kernel` would pick,
        so 11x11 at sigma 1.5 is reproduced exactly.
        """
        if self.window_radius == 0:
            return IDENTITY_KERNEL.as_array()
        offsets = np.arange(-self.window_radius, self.window_radius + 1, dtype=np.float64)
        w = np.exp(-(offsets ** 2) / (2.0 * self.window_sigma ** 2))
        return w / w.sum()


@dataclass(frozen=True)
class WindowStats:
    """Per-pixel weighted window statistics (each field is an ``(h, w)`` map)."""

    mu_x: np.ndarray
    mu_y: np.ndarray
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    sigma_xy: np.ndarray


@dataclass(frozen=True)
class QualityScore:
    ssim: float
    psnr_db: float
    mse: float

    def format(self) -> str:
        psnr = "inf" if math.isinf(self.psnr_db) else f"{self.psnr_db:.6f}"
        return f"ssim={self.ssim:.6f} psnr={psnr} mse={self.mse:.6f}"


def _check_same(a: Image, b: Image):
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")


def mse(a: Image, b: Image) -> float:
    _check_same(a, b)
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    return float(np.mean(diff * diff))


def psnr_from_mse(err: float, max_i: float = 255.0) -> float:
    if err == 0:
        return math.inf
    return 10.0 * math.log10(max_i * max_i / err)


def psnr(a: Image, b: Image, max_i: float = 255.0) -> float:
    if max_i <= 0:
        raise ValueError("max_i must be positive")
    return psnr_from_mse(mse(a, b), max_i)


def _luma_planes(a: Image, b: Image):
    _check_same(a, b)
    x = to_luma(a).pixels[:, :, 0].astype(np.float64)
    y = to_luma(b).pixels[:, :, 0].astype(np.float64)
    return x, y


def _moments(x, y, p: SsimParams):
    w = p.window()
    k = Kernel(p.window_radius, tuple(w))
    f = convolve_stack(np.stack([x, y, x * x, y * y, x * y]), k.as_array())
    mu_x, mu_y = f[0], f[1]
    var_x = f[2] - mu_x * mu_x
    var_y = f[3] - mu_y * mu_y
    cov = f[4] - mu_x * mu_y
    return mu_x, mu_y, var_x, var_y, cov


def window_stats(a: Image, b: Image, p: SsimParams = SsimParams()) -> WindowStats:
    x, y = _luma_planes(a, b)
    mu_x, mu_y, var_x, var_y, cov = _moments(x, y, p)
    return WindowStats(
        mu_x, mu_y,
        np.sqrt(np.maximum(var_x, 0.0)),
        np.sqrt(np.maximum(var_y, 0.0)),
        cov,
    )


def ssim_map(a: Image, b: Image, p: SsimParams = SsimParams()) -> np.ndarray:
    x, y = _luma_planes(a, b)
    mu_x, mu_y, var_x, var_y, cov = _moments(x, y, p)
    c1, c2 = p.c1, p.c2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return num / den


def ssim(a: Image, b: Image, p: SsimParams = SsimParams()) -> float:
    """Mean SSIM over every pixel-centred window of the luma planes."""
    # np.mean uses a fixed pairwise order, so repeated calls agree exactly
    return float(np.mean(ssim_map(a, b, p)))


def score(a: Image, b: Image, p: SsimParams = SsimParams(), max_i: float = 255.0) -> QualityScore:
    err = mse(a, b)
    return QualityScore(ssim=ssim(a, b, p), psnr_db=psnr_from_mse(err, max_i), mse=err)
