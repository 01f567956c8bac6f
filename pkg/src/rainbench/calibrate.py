"""Droplet-count calibration against real-rain references and the OLS fit."""
from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import (BadConfig, DegenerateX, DimensionMismatch, EmptyAcceptanceSet,
                     InsufficientPoints)
from .imaging import Image
from .quality import SsimParams, psnr_from_mse, mse, ssim
from .rainsim import DropletStyle, composite, generate_field


@dataclass(frozen=True)
class AcceptanceBand:
    ssim_lo: float = 0.9500
    ssim_hi: float = 0.9510
    psnr_min: float = 41.50

    def __post_init__(self):
        if not self.ssim_lo < self.ssim_hi:
            raise ValueError("ssim_lo must be below ssim_hi")

    def accepts(self, ssim_value: float, psnr_value: float) -> bool:
        return self.ssim_lo < ssim_value < self.ssim_hi and psnr_value > self.psnr_min


@dataclass(frozen=True)
class SweepRange:
    n_min: int = 10
    n_max: int = 5000
    step: int = 10

    def __post_init__(self):
        if self.step < 1 or self.n_min > self.n_max or self.n_min < 0:
            raise ValueError("need 0 <= n_min <= n_max and step >= 1")
        if (self.n_max - self.n_min) % self.step:
            raise ValueError("n_max - n_min must be a multiple of step")

    def counts(self) -> range:
        return range(self.n_min, self.n_max + 1, self.step)


@dataclass(frozen=True)
class CalibrationPoint:
    rainfall: float
    accepted_counts: tuple
    chosen_count: int


@dataclass(frozen=True)
class CalibrationFit:
    slope: float
    intercept: float
    r_squared: float
    slope_ci95: tuple
    intercept_ci95: tuple
    n_points: int

    def to_text(self) -> str:
        def ci(pair):
            return f"[{pair[0]!r},{pair[1]!r}]"

        return (f"slope={self.slope!r} intercept={self.intercept!r} r2={self.r_squared!r} "
                f"slope_ci={ci(self.slope_ci95)} intercept_ci={ci(self.intercept_ci95)} "
                f"n={self.n_points}\n")


_FIT_FIELD = re.compile(r"(\w+)=(\[[^\]]*\]|\S+)")


def parse_fit(text: str) -> CalibrationFit:
    fields = dict(_FIT_FIELD.findall(text))
    try:
        def pair(s):
            lo, hi = s.strip("[]").split(",")
            return (float(lo), float(hi))

        return CalibrationFit(
            slope=float(fields["slope"]),
            intercept=float(fields["intercept"]),
            r_squared=float(fields.get("r2", "nan")),
            slope_ci95=pair(fields["slope_ci"]) if "slope_ci" in fields else (math.nan, math.nan),
            intercept_ci95=pair(fields["intercept_ci"]) if "intercept_ci" in fields else (math.nan, math.nan),
            n_points=int(fields.get("n", "0")),
        )
    except (KeyError, ValueError) as exc:
        raise BadConfig(f"malformed fit file: {exc}") from None


def read_fit(path) -> CalibrationFit:
    return parse_fit(Path(path).read_text())


def write_fit(fit: CalibrationFit, path) -> None:
    Path(path).write_text(fit.to_text())


# A scorer maps a droplet count to (ssim, psnr) against the reference.
Scorer = Callable[[int], tuple]


def image_scorer(clean: Image, reference: Image, style: DropletStyle, seed: int,
                 params: SsimParams = SsimParams()) -> Scorer:
    """Rain ``clean`` with N droplets and score it against ``reference``."""
    if clean.shape != reference.shape:
        raise DimensionMismatch(f"clean {clean.shape} and reference {reference.shape} differ")

    def scorer(n: int):
        rainy = composite(clean, generate_field(n, seed, style, clean.width, clean.height), style)
        return ssim(rainy, reference, params), psnr_from_mse(mse(rainy, reference))

    return scorer


def sweep_band(clean: Image | None = None, reference: Image | None = None,
               range: SweepRange = SweepRange(), band: AcceptanceBand = AcceptanceBand(),
               style: DropletStyle = DropletStyle(), seed: int = 0,
               scorer: Scorer | None = None, jobs: int = 1):
    """Every grid count whose scores fall inside ``band``, as ``(count, ssim, psnr)``."""
    if scorer is None:
        if clean is None or reference is None:
            raise ValueError("need clean and reference images when no scorer is given")
        scorer = image_scorer(clean, reference, style, seed)
    elif clean is not None and reference is not None and clean.shape != reference.shape:
        raise DimensionMismatch(f"clean {clean.shape} and reference {reference.shape} differ")
    counts = list(range.counts())
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            scores = list(pool.map(scorer, counts))
    else:
        scores = [scorer(n) for n in counts]
    rows = sorted(zip(counts, scores))
    return [(n, float(s), float(p)) for n, (s, p) in rows if band.accepts(s, p)]


def choose_count(accepted: Sequence, range: SweepRange = SweepRange(), mode: str = "midpoint") -> int:
    """Representative count of an accepted set.

    ``midpoint`` snaps ``(min + max) / 2`` to the nearest grid count, breaking
    ties toward the lower one; ``first`` and ``last`` return the range ends.
    """
    if not accepted:
        raise EmptyAcceptanceSet("no droplet count satisfied the acceptance band")
    counts = [row[0] if isinstance(row, (tuple, list)) else int(row) for row in accepted]
    lo, hi = min(counts), max(counts)
    if mode == "first":
        return lo
    if mode == "last":
        return hi
    if mode != "midpoint":
        raise ValueError(f"unknown choose mode {mode!r}")
    # work in doubled units to stay in integers: 2*mid = lo + hi
    twice = lo + hi - 2 * range.n_min
    k_lo = twice // (2 * range.step)
    below = range.n_min + k_lo * range.step
    above = below + range.step
    if (lo + hi) - 2 * below <= 2 * above - (lo + hi):
        pick = below
    else:
        pick = above
    return min(max(pick, lo), hi)


def t_quantile(p: float, df: int) -> float:
    return float(stats.t.ppf(p, df))


def fit_linear(points: Sequence) -> CalibrationFit:
    """OLS of rainfall on droplet count with two-sided 95% t intervals."""
    pts = [(float(n), float(w)) for n, w in points]
    if len(pts) < 3:
        raise InsufficientPoints(f"need at least 3 points, got {len(pts)}")
    # canonical order so the result does not depend on input order
    pts.sort()
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    n = len(pts)
    x_bar = math.fsum(x) / n
    y_bar = math.fsum(y) / n
    dx = x - x_bar
    sxx = math.fsum(dx * dx)
    if sxx == 0.0:
        raise DegenerateX("all droplet counts are equal")
    sxy = math.fsum(dx * (y - y_bar))
    slope = sxy / sxx
    intercept = y_bar - slope * x_bar
    resid = y - (intercept + slope * x)
    ss_res = math.fsum(resid * resid)
    ss_tot = math.fsum((y - y_bar) ** 2)
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    dof = n - 2
    s2 = ss_res / dof
    se_slope = math.sqrt(s2 / sxx)
    se_int = math.sqrt(s2 * (1.0 / n + x_bar * x_bar / sxx))
    t = t_quantile(0.975, dof)
    return CalibrationFit(
        slope=slope,
        intercept=intercept,
        r_squared=r2,
        slope_ci95=(slope - t * se_slope, slope + t * se_slope),
        intercept_ci95=(intercept - t * se_int, intercept + t * se_int),
        n_points=n,
    )


def calibrate_condition(clean: Image, reference: Image, rainfall: float, **kwargs) -> CalibrationPoint:
    mode = kwargs.pop("mode", "midpoint")
    rng = kwargs.get("range", SweepRange())
    accepted = sweep_band(clean, reference, **kwargs)
    return CalibrationPoint(rainfall, tuple(r[0] for r in accepted), choose_count(accepted, rng, mode))
