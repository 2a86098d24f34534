"""Time the numba kernels against the pure-numpy fallback.

Run: python benchmarks/bench_kernels.py [--frames N] [--size WxH]

Covers the three hot paths: separable bicubic resampling, SSIM windowed
correlation, and the per-pair redundancy statistics scan.
"""

import argparse
import time

import numpy as np

from svtrans import _accel
from svtrans.metrics import _gaussian_window
from svtrans.resample import _tap_table


def timeit(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench(width, height, frames):
    rng = np.random.default_rng(7)
    hr = rng.uniform(0, 255, (height, width))
    lr_pair = (
        rng.integers(0, 256, (height // 4, width // 4), dtype=np.uint8),
        rng.integers(0, 256, (height // 4, width // 4), dtype=np.uint8),
    )
    small = rng.uniform(0, 255, (height // 4, width // 4))
    win = _gaussian_window()
    idx, wts = _tap_table(height // 4, height, down=True)

    cases = {
        f"resample_rows {width}x{height} -> /4": ("resample_rows", (hr, idx, wts)),
        f"pair_stats {width // 4}x{height // 4} x{frames}": ("pair_stats", lr_pair + (2,)),
        f"corr_valid {width // 4}x{height // 4}": ("corr_valid", (small, win)),
    }

    print(f"{'kernel':44s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}")
    for label, (name, args) in cases.items():
        np_fn = _accel.BACKENDS["numpy"][name]
        t_np = timeit(lambda: [np_fn(*args) for _ in range(frames)])
        if "numba" in _accel.BACKENDS:
            nb_fn = _accel.BACKENDS["numba"][name]
            nb_fn(*args)  # compile outside the timed region
            t_nb = timeit(lambda: [nb_fn(*args) for _ in range(frames)])
            print(f"{label:44s} {t_np * 1e3:10.2f}ms {t_nb * 1e3:10.2f}ms {t_np / t_nb:8.1f}x")
        else:
            print(f"{label:44s} {t_np * 1e3:10.2f}ms {'n/a':>12s} {'n/a':>9s}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", default="1280x720")
    parser.add_argument("--frames", type=int, default=20)
    args = parser.parse_args()
    width, height = (int(v) for v in args.size.split("x"))
    bench(width, height, args.frames)


if __name__ == "__main__":
    main()
