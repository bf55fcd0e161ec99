"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run twice to compare paths:

    python benchmarks/bench_kernels.py                 # numba (default)
    PAGEWATCH_NO_NUMBA=1 python benchmarks/bench_kernels.py

Each benchmark reports the best of `--repeat` timed runs after a warmup call
(which also absorbs numba JIT compilation).
"""

import argparse
import os
import time

import numpy as np


def timeit(fn, repeat):
    fn()  # warmup / JIT
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    from pagewatch import _accel
    from pagewatch.imaging import RawScreenshot, normalize_screenshot
    from pagewatch.phash import compute_phash

    mode = "numba" if _accel.USE_NUMBA else "numpy"
    print(f"backend: {mode}  (PAGEWATCH_NO_NUMBA={os.environ.get('PAGEWATCH_NO_NUMBA', '')!r})")
    print(f"{'benchmark':<44}{'best':>12}")

    rng = np.random.default_rng(0)
    big = rng.integers(0, 256, size=(2160, 3840, 3), dtype=np.uint8)
    mid = rng.integers(0, 256, size=(1080, 1920, 3), dtype=np.uint8)
    canvas = rng.integers(0, 256, size=(540, 960, 3), dtype=np.uint8)
    fcanvas = canvas.astype(np.float64) / 255.0

    rows = [
        ("resize_area_u8 3840x2160 -> 1920x1080",
         lambda: _accel.resize_area_u8(big, 1080, 1920)),
        ("resize_area_u8 1920x1080 -> 960x540",
         lambda: _accel.resize_area_u8(mid, 540, 960)),
        ("resize_area_u8 960x540 -> 256x256 (phash)",
         lambda: _accel.resize_area_u8(canvas[:, :, 0], 256, 256)),
        ("resize_area_f64 960x540 -> 333x777 (unaligned)",
         lambda: _accel.resize_area_f64(fcanvas, 333, 777)),
        ("normalize_screenshot 3840x2160",
         lambda: normalize_screenshot(RawScreenshot.from_array(big))),
        ("normalize_screenshot 1366x768",
         lambda: normalize_screenshot(RawScreenshot.from_array(mid[:768, :1366]))),
    ]

    norm = normalize_screenshot(RawScreenshot.from_array(mid))
    rows.append(("compute_phash (normalized input)", lambda: compute_phash(norm)))

    x = rng.standard_normal((16, 8, 68, 120)).astype(np.float32)
    cols_shape = None

    def run_im2col():
        nonlocal cols_shape
        cols = _accel.im2col(x, 3, 2, 1)
        cols_shape = cols.shape
        return cols

    cols = run_im2col()
    g = rng.standard_normal(cols.shape).astype(np.float32)
    rows.append(("im2col  (16, 8, 68, 120) k3 s2", run_im2col))
    rows.append(("col2im  (16, 8, 68, 120) k3 s2",
                 lambda: _accel.col2im(g, x.shape, 3, 2, 1)))

    for name, fn in rows:
        best = timeit(fn, args.repeat)
        print(f"{name:<44}{best * 1000:>10.2f}ms")


if __name__ == "__main__":
    main()
