"""Hot inner loops, each in a numba and a pure-numpy flavour.

The public names (``convolve_rows``, ``convolve_cols``, ``rasterize_streaks``)
dispatch on :data:`rainbench._accel.USE_JIT`. Both flavours accumulate in the
same order, so on IEEE hardware without fastmath they agree bit for bit; the
test suite checks that directly against the ``*_numba`` / ``*_numpy`` names.
"""
import math

import numpy as np

from ._accel import USE_JIT, njit


# -- mirror (reflect-without-repeat) indexing ---------------------------------

@njit
def _mirror_index(i, n):
    if n == 1:
        return 0
    period = 2 * (n - 1)
    m = abs(i) % period
    if m >= n:
        m = period - m
    return m


def mirror_indices(start, stop, n):
    """Vectorised ``_mirror_index`` over ``range(start, stop)``."""
    idx = np.arange(start, stop, dtype=np.int64)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    m = np.abs(idx) % period
    return np.where(m >= n, period - m, m)


# -- separable convolution ----------------------------------------------------

@njit
def convolve_rows_numba(src, weights):
    h, w = src.shape
    taps = weights.shape[0]
    r = (taps - 1) // 2
    out = np.zeros((h, w), dtype=np.float64)
    lo = min(r, w)
    hi = max(w - r, lo)
    for y in range(h):
        row = src[y]
        dst = out[y]
        for k in range(taps):
            wk = weights[k]
            # interior: no mirroring needed, contiguous and vectorisable
            for x in range(lo, hi):
                dst[x] += wk * row[x + k - r]
        for x in range(0, lo):
            acc = 0.0
            for k in range(taps):
                acc += weights[k] * row[_mirror_index(x + k - r, w)]
            dst[x] = acc
        for x in range(hi, w):
            acc = 0.0
            for k in range(taps):
                acc += weights[k] * row[_mirror_index(x + k - r, w)]
            dst[x] = acc
    return out


@njit
def convolve_cols_numba(src, weights):
    h, w = src.shape
    taps = weights.shape[0]
    r = (taps - 1) // 2
    out = np.zeros((h, w), dtype=np.float64)
    # row-major friendly: accumulate whole source rows into each output row
    for y in range(h):
        for k in range(taps):
            sy = y + k - r
            if sy < 0 or sy >= h:
                sy = _mirror_index(sy, h)
            wk = weights[k]
            for x in range(w):
                out[y, x] += wk * src[sy, x]
    return out


def convolve_rows_numpy(src, weights):
    h, w = src.shape
    r = (len(weights) - 1) // 2
    padded = src[:, mirror_indices(-r, w + r, w)]
    out = np.zeros((h, w), dtype=np.float64)
    for k in range(len(weights)):
        out += weights[k] * padded[:, k:k + w]
    return out


def convolve_cols_numpy(src, weights):
    h, w = src.shape
    r = (len(weights) - 1) // 2
    padded = src[mirror_indices(-r, h + r, h), :]
    out = np.zeros((h, w), dtype=np.float64)
    for k in range(len(weights)):
        out += weights[k] * padded[k:k + h, :]
    return out


# -- anti-aliased streak rasterisation ----------------------------------------
# Pixel (row j, col i) has its centre at (i + 0.5, j + 0.5). Coverage of a
# streak is clamp(width/2 + 0.5 - distance_to_segment, 0, 1) * opacity, and
# streaks combine by per-pixel max so the result is order independent.

@njit
def rasterize_streaks_numba(height, width, cx, cy, length, angle, sw, opacity):
    layer = np.zeros((height, width), dtype=np.float64)
    for d in range(cx.shape[0]):
        hx = math.sin(angle[d]) * length[d] * 0.5
        hy = math.cos(angle[d]) * length[d] * 0.5
        x0 = cx[d] - hx
        y0 = cy[d] - hy
        sx = 2.0 * hx
        sy = 2.0 * hy
        len2 = sx * sx + sy * sy
        half = sw[d] * 0.5
        pad = half + 1.0
        i_lo = max(int(math.floor(min(x0, x0 + sx) - pad)), 0)
        i_hi = min(int(math.floor(max(x0, x0 + sx) + pad)), width - 1)
        j_lo = max(int(math.floor(min(y0, y0 + sy) - pad)), 0)
        j_hi = min(int(math.floor(max(y0, y0 + sy) + pad)), height - 1)
        for j in range(j_lo, j_hi + 1):
            ey = (j + 0.5) - y0
            for i in range(i_lo, i_hi + 1):
                ex = (i + 0.5) - x0
                if len2 > 0.0:
                    t = (ex * sx + ey * sy) / len2
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                else:
                    t = 0.0
                qx = ex - t * sx
                qy = ey - t * sy
                cov = half + 0.5 - math.sqrt(qx * qx + qy * qy)
                if cov <= 0.0:
                    continue
                if cov > 1.0:
                    cov = 1.0
                cov = cov * opacity[d]
                if cov > layer[j, i]:
                    layer[j, i] = cov
    return layer


def rasterize_streaks_numpy(height, width, cx, cy, length, angle, sw, opacity):
    layer = np.zeros((height, width), dtype=np.float64)
    for d in range(len(cx)):
        hx = math.sin(angle[d]) * length[d] * 0.5
        hy = math.cos(angle[d]) * length[d] * 0.5
        x0 = cx[d] - hx
        y0 = cy[d] - hy
        sx = 2.0 * hx
        sy = 2.0 * hy
        len2 = sx * sx + sy * sy
        half = sw[d] * 0.5
        pad = half + 1.0
        i_lo = max(int(math.floor(min(x0, x0 + sx) - pad)), 0)
        i_hi = min(int(math.floor(max(x0, x0 + sx) + pad)), width - 1)
        j_lo = max(int(math.floor(min(y0, y0 + sy) - pad)), 0)
        j_hi = min(int(math.floor(max(y0, y0 + sy) + pad)), height - 1)
        if i_lo > i_hi or j_lo > j_hi:
            continue
        ey = (np.arange(j_lo, j_hi + 1) + 0.5 - y0)[:, None]
        ex = (np.arange(i_lo, i_hi + 1) + 0.5 - x0)[None, :]
        if len2 > 0.0:
            t = np.clip((ex * sx + ey * sy) / len2, 0.0, 1.0)
        else:
            t = np.zeros(np.broadcast_shapes(ex.shape, ey.shape))
        qx = ex - t * sx
        qy = ey - t * sy
        cov = half + 0.5 - np.sqrt(qx * qx + qy * qy)
        cov = np.where(cov > 1.0, 1.0, cov) * opacity[d]
        cov = np.where(cov > 0.0, cov, 0.0)
        window = layer[j_lo:j_hi + 1, i_lo:i_hi + 1]
        np.maximum(window, cov, out=window)
    return layer


if USE_JIT:
    convolve_rows = convolve_rows_numba
    convolve_cols = convolve_cols_numba
    rasterize_streaks = rasterize_streaks_numba
else:
    convolve_rows = convolve_rows_numpy
    convolve_cols = convolve_cols_numpy
    rasterize_streaks = rasterize_streaks_numpy


def convolve2d(plane, weights):
    """Horizontal then vertical pass over one float64 plane."""
    plane = np.ascontiguousarray(plane, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    return convolve_cols(convolve_rows(plane, weights), weights)


def convolve_stack(planes, weights):
    """``convolve2d`` over a ``(n, h, w)`` stack."""
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    out = np.empty(planes.shape, dtype=np.float64)
    for i in range(planes.shape[0]):
        out[i] = convolve2d(planes[i], weights)
    return out
