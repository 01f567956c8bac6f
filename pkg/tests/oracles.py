"""Slow reference implementations, written from the definitions.

None of these reuse the package's kernels: mirroring is the textbook
bounce-until-inside loop and every statistic is an explicit sum.
"""
import math

import numpy as np


def gaussian_weights(radius, sigma):
    w = [math.exp(-(i * i) / (2.0 * sigma * sigma)) for i in range(-radius, radius + 1)]
    s = sum(w)
    return [v / s for v in w]


def _mirror(i, n):
    # definition: reflect about the edge samples without repeating them
    if n == 1:
        return 0
    while i < 0 or i >= n:
        if i < 0:
            i = -i
        if i >= n:
            i = 2 * (n - 1) - i
    return i


def direct_convolve(plane, weights):
    """2D convolution with the outer-product kernel, one output at a time."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    r = (len(weights) - 1) // 2
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for a in range(-r, r + 1):
                for b in range(-r, r + 1):
                    acc += weights[a + r] * weights[b + r] * plane[_mirror(y + a, h), _mirror(x + b, w)]
            out[y, x] = acc
    return out


def ssim_oracle(x, y, radius=5, sigma=1.5, c1=(0.01 * 255) ** 2, c2=(0.03 * 255) ** 2):
    """Mean over pixels of SSIM computed from explicit weighted window sums."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    h, w = x.shape
    g = gaussian_weights(radius, sigma) if radius > 0 else [1.0]
    vals = []
    for i in range(h):
        for j in range(w):
            wx, wy, ww = [], [], []
            for a in range(-radius, radius + 1):
                for b in range(-radius, radius + 1):
                    ii, jj = _mirror(i + a, h), _mirror(j + b, w)
                    ww.append(g[a + radius] * g[b + radius])
                    wx.append(x[ii, jj])
                    wy.append(y[ii, jj])
            total = math.fsum(ww)
            mx = math.fsum(p * q for p, q in zip(ww, wx)) / total
            my = math.fsum(p * q for p, q in zip(ww, wy)) / total
            vx = math.fsum(p * (q - mx) ** 2 for p, q in zip(ww, wx)) / total
            vy = math.fsum(p * (q - my) ** 2 for p, q in zip(ww, wy)) / total
            cxy = math.fsum(p * (q - mx) * (s - my) for p, q, s in zip(ww, wx, wy)) / total
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return math.fsum(vals) / len(vals)


def ap_by_thresholds(scored, total_gt):
    """AP from precision/recall evaluated at every distinct confidence threshold."""
    if not scored:
        return 0.0
    ops = []
    for t in sorted({c for c, _ in scored}, reverse=True):
        kept = [hit for c, hit in scored if c >= t]
        tp = sum(kept)
        ops.append((tp / total_gt, tp / len(kept)))
    recalls = sorted({r for r, _ in ops})
    ap, prev = 0.0, 0.0
    for r in recalls:
        p_interp = max(p for rr, p in ops if rr >= r)
        ap += (r - prev) * p_interp
        prev = r
    return ap
