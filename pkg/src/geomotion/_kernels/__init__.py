"""Hot numeric kernels with backend selection at import time.

The compiled Cython extension is used when it was built; otherwise the
pure-NumPy fallback takes over transparently. Set GEOMOTION_PURE_PYTHON=1
to force the fallback (useful for benchmarking, see benchmarks/).

Both backends implement the same contracts; results may differ in the last
floating-point bits because summation order differs.
"""

import os

from . import fallback

if os.environ.get("GEOMOTION_PURE_PYTHON") == "1":
    _impl = fallback
    BACKEND = "numpy"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = fallback
        BACKEND = "numpy"

conv2d_forward = _impl.conv2d_forward
conv2d_backward_input = _impl.conv2d_backward_input
conv2d_backward_weight = _impl.conv2d_backward_weight
bilinear_resize_forward = _impl.bilinear_resize_forward
bilinear_resize_backward = _impl.bilinear_resize_backward

__all__ = [
    "BACKEND",
    "fallback",
    "conv2d_forward",
    "conv2d_backward_input",
    "conv2d_backward_weight",
    "bilinear_resize_forward",
    "bilinear_resize_backward",
]
