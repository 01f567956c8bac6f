"""Time the numba kernels against their numpy twins on an 800x600 frame.

    python benchmarks/bench_kernels.py [--repeat N]

The first numba call (compilation, or cache load) is reported separately.
"""
import argparse
import time

import numpy as np

from rainbench import kernels
from rainbench.imaging import gaussian_kernel
from rainbench.rainsim import DropletStyle, generate_field

H, W = 600, 800


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    plane = rng.random((H, W)) * 255
    weights = np.asarray(gaussian_kernel(1.5).weights)
    fld = generate_field(3204, 42, DropletStyle(), W, H)
    streak_args = (H, W, fld.cx, fld.cy, fld.length, fld.angle, fld.width, fld.opacity)

    cases = [
        ("convolve rows (11 taps)", kernels.convolve_rows_numba, kernels.convolve_rows_numpy, (plane, weights)),
        ("convolve cols (11 taps)", kernels.convolve_cols_numba, kernels.convolve_cols_numpy, (plane, weights)),
        ("rasterize 3204 streaks", kernels.rasterize_streaks_numba, kernels.rasterize_streaks_numpy, streak_args),
    ]
    print(f"{'kernel':<26}{'first jit call':>16}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for name, jit_fn, np_fn, fargs in cases:
        t0 = time.perf_counter()
        jit_fn(*fargs)
        first = time.perf_counter() - t0
        t_jit = best_of(jit_fn, fargs, args.repeat)
        t_np = best_of(np_fn, fargs, args.repeat)
        print(f"{name:<26}{first * 1e3:>13.1f} ms{t_jit * 1e3:>9.2f} ms{t_np * 1e3:>9.2f} ms{t_np / t_jit:>9.1f}x")


if __name__ == "__main__":
    main()
