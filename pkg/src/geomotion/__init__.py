"""Feed-forward motion segmentation: geometry, flow, and camera tokens are
fused per frame and decoded into motion masks by joint self-attention over
the whole sequence."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
