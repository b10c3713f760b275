"""Optical-flow token encoder: a small CNN over the dense (u, v) field,
bilinearly downsampled to the patch grid and flattened to tokens."""

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeContractError


def init_flow_encoder(params, d_flow, rng, prefix="flowenc"):
    """Register the two 3x3 conv layers: 2 -> d_flow/2 -> d_flow channels.

    Initialization is near a signed local average: when the mid width
    allows it, the first layer starts as box kernels emitting smoothed
    (+u, -u, +v, -v), and the second box-averages those channels through,
    so a graded, sign-split neighborhood mean of the raw displacement is
    available to the fusion stage from step one. The rest of the capacity
    starts small-random."""
    if d_flow < 2 or d_flow % 2:
        raise ConfigError(f"d_flow must be even and >= 2, got {d_flow}")
    mid = d_flow // 2
    w1 = rng.normal(0.0, 0.05, (mid, 2, 3, 3)).astype(np.float32)
    w2 = rng.normal(0.0, 0.05, (d_flow, mid, 3, 3)).astype(np.float32)
    if mid >= 4:
        for out_ch, (in_ch, sign) in enumerate(
                [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)]):
            w1[out_ch, in_ch] += sign / 9.0
    else:
        for out_ch in range(mid):
            w1[out_ch, out_ch % 2] += 1.0 / 9.0
    for ch in range(min(mid, d_flow)):
        w2[ch, ch] += 1.0 / 9.0
    params.add(f"{prefix}.conv1.weight", w1)
    params.add(f"{prefix}.conv1.bias", np.zeros(mid, dtype=np.float32))
    params.add(f"{prefix}.conv2.weight", w2)
    params.add(f"{prefix}.conv2.bias", np.zeros(d_flow, dtype=np.float32))


def encode_flow(flows, params, grid, d_flow, prefix="flowenc"):
    """flows [N, H, W, 2] -> tokens [N, h*w, d_flow], differentiable in the
    conv parameters. Conv at full resolution, ReLU between the two layers,
    then bilinear downsample to the (h, w) patch grid."""
    dtype = params[f"{prefix}.conv1.weight"].data.dtype
    flows = np.asarray(flows, dtype=dtype)
    if flows.ndim != 4 or flows.shape[-1] != 2:
        raise ShapeContractError(f"flow: expected [N, H, W, 2], got {flows.shape}")
    h, w = grid
    n = flows.shape[0]
    x = ad.Tensor(np.ascontiguousarray(flows.transpose(0, 3, 1, 2)))
    x = ad.conv2d(x, params[f"{prefix}.conv1.weight"], params[f"{prefix}.conv1.bias"])
    x = ad.relu(x)
    x = ad.conv2d(x, params[f"{prefix}.conv2.weight"], params[f"{prefix}.conv2.bias"])
    x = ad.bilinear_resize(x, h, w)  # [N, d_flow, h, w]
    x = ad.reshape(x, (n, d_flow, h * w))
    return ad.transpose(x, (0, 2, 1))


def last_frame_flow(flows):
    """Extend N-1 pairwise flows to N by duplicating the final one, so every
    frame has a flow token. Exact for constant-velocity scenes."""
    flows = np.asarray(flows)
    if flows.ndim != 4 or flows.shape[0] < 1:
        raise ConfigError("need at least one pairwise flow (N >= 2 frames)")
    return np.concatenate([flows, flows[-1:]], axis=0)
