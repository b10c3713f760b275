"""Feature aggregation: concatenate the two geometry streams, project with
Linear+ReLU, concatenate flow and camera tokens, and project again.

Ablation toggles zero out a modality instead of shrinking the concat width,
so one parameter set serves every ablation row.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ShapeContractError


@dataclass(frozen=True)
class AblationToggles:
    cam: bool = True
    flow: bool = True
    shallow: bool = True  # low-level geometry stream

    def to_dict(self):
        return {"cam": self.cam, "flow": self.flow, "shallow": self.shallow}


def init_fusion(params, c, d_flow, d_cam, rng, prefix="fusion"):
    """Register the two linear maps: 4C -> 2C and (2C + d_flow + d_cam) -> 2C."""
    def xavier(din, dout):
        bound = np.sqrt(6.0 / (din + dout))
        return rng.uniform(-bound, bound, (din, dout)).astype(np.float32)

    params.add(f"{prefix}.proj_geo.weight", xavier(4 * c, 2 * c))
    params.add(f"{prefix}.proj_geo.bias", np.zeros(2 * c, dtype=np.float32))
    d_cat = 2 * c + d_flow + d_cam
    params.add(f"{prefix}.proj_out.weight", xavier(d_cat, 2 * c))
    params.add(f"{prefix}.proj_out.bias", np.zeros(2 * c, dtype=np.float32))


def _check(name, arr, expect_tokens, expect_channels):
    if arr.ndim != 3:
        raise ShapeContractError(f"{name}: expected rank 3, got shape {arr.shape}")
    if expect_tokens is not None and arr.shape[:2] != expect_tokens:
        raise ShapeContractError(
            f"{name}: token grid {arr.shape[:2]} does not match {expect_tokens}"
        )
    if arr.shape[2] != expect_channels:
        raise ShapeContractError(
            f"{name}: channel width {arr.shape[2]}, expected {expect_channels}"
        )


def aggregate(bundle, flow_tokens, params, toggles=None, prefix="fusion"):
    """Fuse geometry, flow, and camera tokens into [N, h*w, 2C].

    bundle: GeometryBundle (provider output, never receives gradient).
    flow_tokens: Tensor or array [N, h*w, d_flow].
    """
    toggles = toggles or AblationToggles()
    c = bundle.channels
    tokens = bundle.geo_low.shape[:2]
    _check("geo_low", bundle.geo_low, None, 2 * c)
    _check("geo_high", bundle.geo_high, tokens, 2 * c)
    _check("cam", bundle.cam, tokens, bundle.cam.shape[2])
    flow = ad.as_tensor(flow_tokens)
    _check("flow", flow.data, tokens, flow.data.shape[2])

    geo_low = bundle.geo_low if toggles.shallow else np.zeros_like(bundle.geo_low)
    cam = bundle.cam if toggles.cam else np.zeros_like(bundle.cam)
    if not toggles.flow:
        flow = ad.Tensor(np.zeros_like(flow.data))

    geo = ad.concat([ad.Tensor(geo_low), ad.Tensor(bundle.geo_high)], axis=-1)
    geo = ad.relu(ad.linear(geo, params[f"{prefix}.proj_geo.weight"],
                            params[f"{prefix}.proj_geo.bias"]))
    cat = ad.concat([geo, flow, ad.Tensor(cam)], axis=-1)
    return ad.linear(cat, params[f"{prefix}.proj_out.weight"],
                     params[f"{prefix}.proj_out.bias"])


def ablate(bundle, flow_tokens, params, toggles, prefix="fusion"):
    """Fusion with modalities disabled; identical to aggregate when all
    toggles are on."""
    return aggregate(bundle, flow_tokens, params, toggles=toggles, prefix=prefix)
