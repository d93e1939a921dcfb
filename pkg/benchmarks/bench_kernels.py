"""Compare the compiled and numpy determinant kernels.

Usage: python3 benchmarks/bench_kernels.py [--planes N] [--repeat R]

Reports the kernel throughput for each backend, the largest relative
disagreement between them, and the end-to-end time of a 50x50 grid search
with each backend selected.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from slcv import kernels
from slcv.search import GridSpec, grid_search, make_context
from slcv.simkit import SceneSpec, make_scene
from slcv.variety import DEFAULT_ANCHORS, CameraTriple


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--planes", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    if "cython" not in kernels.BACKENDS:
        print("compiled extension not built; only the numpy backend is available")
        return 1

    _, recon = make_scene(SceneSpec(seed=0))
    triple = CameraTriple.from_cameras(recon.cameras[:3])
    rng = np.random.default_rng(0)
    planes = rng.standard_normal((args.planes, 4)) + 1j * rng.standard_normal((args.planes, 4))
    rows = DEFAULT_ANCHORS.draws[0][1]

    out, secs = {}, {}
    for name in ("python", "cython"):
        out[name] = kernels.det_batch(triple.iso_lines, planes, rows, backend=name)
        secs[name] = best_of(lambda: kernels.det_batch(triple.iso_lines, planes, rows, backend=name),
                             args.repeat)
    rel = np.abs(out["cython"] - out["python"]) / np.abs(out["python"])
    print(f"det_batch, {args.planes} planes (best of {args.repeat}):")
    for name in ("python", "cython"):
        print(f"  {name:7s} {secs[name] * 1e3:9.1f} ms   {args.planes / secs[name]:12.0f} det/s")
    print(f"  speed-up {secs['python'] / secs['cython']:.2f}x, max relative difference {rel.max():.1e}")

    ctx = make_context(recon)
    grid_secs = {}
    saved = kernels.BACKEND
    try:
        for name in ("python", "cython"):
            kernels.BACKEND = name
            grid_secs[name] = best_of(lambda: grid_search(ctx, GridSpec(50, 50)), max(1, args.repeat // 2))
    finally:
        kernels.BACKEND = saved
    print("grid search 50x50, 5 cameras:")
    for name in ("python", "cython"):
        print(f"  {name:7s} {grid_secs[name]:9.2f} s")
    print(f"  speed-up {grid_secs['python'] / grid_secs['cython']:.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
