"""Timing comparison of the compiled kernels against the numpy fallback.

Runs each kernel on realistic-size inputs, warms the JIT first, and prints
median per-call times plus the speedup. Usage:

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from railodo.kernels import _numpy as knp

try:
    from railodo.kernels import _numba as knb
except ImportError:  # pragma: no cover - machine without numba
    knb = None


def _median_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _cases():
    rng = np.random.default_rng(0)
    frame = rng.random((480, 640))
    mask = np.ones((480, 640), dtype=np.uint8)
    tex = rng.random((1024, 1024))
    r = np.eye(3)
    hinv = np.ascontiguousarray(np.eye(3) + 0.001 * rng.standard_normal((3, 3)))
    pos = np.array([1.0, 2.0, 8.0])
    yield "warp_bilinear 640x480", "warp_bilinear", (frame, hinv, 0, 0, 640, 480)
    yield "render_plane 640x480", "render_plane", (
        tex, 0.01, r, pos, 800.0, 800.0, 319.5, 239.5, 640, 480,
    )
    yield "ssd_band 64x64 tpl, +-12", "ssd_band", (
        frame, frame, mask, mask, 288, 60, 64, 64, 0, 0, 12, 12,
    )
    yield "harris_score 640x480", "harris_score", (frame,)
    yield "max_filter2d 640x480 r=5", "max_filter2d", (frame, 5)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    print(f"{'kernel':<28} {'numpy [ms]':>12} {'numba [ms]':>12} {'speedup':>9}")
    for label, name, call_args in _cases():
        t_np = _median_time(getattr(knp, name), call_args, args.repeat)
        if knb is None:
            print(f"{label:<28} {t_np*1e3:>12.3f} {'n/a':>12} {'n/a':>9}")
            continue
        fn = getattr(knb, name)
        fn(*call_args)  # JIT warm-up outside the timed region
        t_nb = _median_time(fn, call_args, args.repeat)
        print(
            f"{label:<28} {t_np*1e3:>12.3f} {t_nb*1e3:>12.3f} "
            f"{t_np / t_nb:>8.1f}x"
        )


if __name__ == "__main__":
    main()
