#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-NumPy fallback.

Times conv2d forward/backward and bilinear resize on flow-CNN-shaped
workloads, plus one end-to-end forward pass of the toy model under the
backend selected at import. Run once normally and once with
GEOMOTION_PURE_PYTHON=1 to compare backends:

    python benchmarks/bench_kernels.py
    GEOMOTION_PURE_PYTHON=1 python benchmarks/bench_kernels.py
"""

import json
import time

import numpy as np

from geomotion import _kernels as K
from geomotion._kernels import fallback as F


def timeit(fn, repeats=7):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(name, compiled_fn, fallback_fn):
    tc = timeit(compiled_fn)
    tf = timeit(fallback_fn)
    speedup = tf / tc if tc > 0 else float("inf")
    print(f"{name:34s} selected={tc * 1e3:8.2f} ms   numpy={tf * 1e3:8.2f} ms   "
          f"ratio={speedup:5.2f}x")
    return {"case": name, "selected_ms": tc * 1e3, "numpy_ms": tf * 1e3}


def main():
    rng = np.random.default_rng(0)
    print(f"selected backend: {K.BACKEND}")
    results = []

    # flow-CNN shapes: 16 frames of 64x64 flow through 2 -> 8 -> 16 channels
    x1 = rng.normal(size=(16, 2, 64, 64)).astype(np.float32)
    w1 = rng.normal(size=(8, 2, 3, 3)).astype(np.float32)
    b1 = np.zeros(8, dtype=np.float32)
    y1 = K.conv2d_forward(x1, w1, b1)
    gy1 = rng.normal(size=y1.shape).astype(np.float32)

    results.append(bench_case(
        "conv2d fwd 16x2x64x64 -> 8ch",
        lambda: K.conv2d_forward(x1, w1, b1),
        lambda: F.conv2d_forward(x1, w1, b1),
    ))
    results.append(bench_case(
        "conv2d bwd input",
        lambda: K.conv2d_backward_input(gy1, w1),
        lambda: F.conv2d_backward_input(gy1, w1),
    ))
    results.append(bench_case(
        "conv2d bwd weight",
        lambda: K.conv2d_backward_weight(gy1, x1, 3, 3),
        lambda: F.conv2d_backward_weight(gy1, x1, 3, 3),
    ))
    results.append(bench_case(
        "bilinear fwd 16x16x64x64 -> 8x8",
        lambda: K.bilinear_resize_forward(y1, 8, 8),
        lambda: F.bilinear_resize_forward(y1, 8, 8),
    ))
    g8 = rng.normal(size=(16, 8, 8, 8)).astype(np.float32)
    results.append(bench_case(
        "bilinear bwd 8x8 -> 64x64",
        lambda: K.bilinear_resize_backward(g8, 64, 64),
        lambda: F.bilinear_resize_backward(g8, 64, 64),
    ))

    # end-to-end toy forward under the selected backend
    from geomotion.model import ModelConfig, MotionSegmenter
    from geomotion.providers import ProviderSpec
    from geomotion.synth import SceneConfig, generate_sequence

    seq = generate_sequence(SceneConfig(), 0)
    model = MotionSegmenter(ModelConfig(), seed=0)
    spec = ProviderSpec(kind="synthetic", noise_amplitude=0.25)
    bundle, flows = model.prepare_inputs(seq, spec)
    t = timeit(lambda: model.predict_prepared(bundle, flows), repeats=5)
    print(f"{'toy forward, 8 frames (selected)':34s} {t * 1e3:8.2f} ms   "
          f"({t / seq.num_frames * 1e3:.2f} ms/frame)")
    results.append({"case": "toy_forward", "selected_ms": t * 1e3})

    print(json.dumps({"backend": K.BACKEND, "results": results}))


if __name__ == "__main__":
    main()
