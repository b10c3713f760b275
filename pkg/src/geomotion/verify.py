"""Finite-difference verification suite: every differentiable operation is
checked against central differences in double precision. The CLI gradcheck
subcommand and the acceptance tests both run this registry."""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, grad_check
from .errors import ConfigError
from .fusion import AblationToggles
from .losses import LossConfig, dice_loss, focal_loss, total_loss

DEFAULT_TOLERANCE = 1e-4


def _rng(tag):
    return np.random.default_rng([tag, 0xC4])


def check_linear():
    rng = _rng(1)
    w = rng.normal(size=(6, 4))
    b = rng.normal(size=4)
    x = rng.normal(size=(3, 6))
    return grad_check(lambda t: ad.tsum(ad.mul(ad.linear(t, Tensor(w), Tensor(b)), 2.0) ** 2.0), x)


def check_conv2d():
    rng = _rng(2)
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    x = rng.normal(size=(2, 2, 6, 5))
    return grad_check(lambda t: ad.tsum(ad.conv2d(t, Tensor(w), Tensor(b)) ** 2.0), x)


def check_conv2d_weights():
    rng = _rng(3)
    x = Tensor(rng.normal(size=(2, 2, 6, 5)))
    w = rng.normal(size=(3, 2, 3, 3))
    return grad_check(lambda t: ad.tsum(ad.relu(ad.conv2d(x, t)) ** 2.0), w)


def check_sigmoid():
    rng = _rng(4)
    return grad_check(lambda t: ad.tsum(ad.sigmoid(t) ** 2.0), rng.normal(size=12))


def check_relu():
    rng = _rng(5)
    return grad_check(lambda t: ad.tsum(ad.relu(t) ** 2.0), rng.normal(size=12) + 0.05)


def check_softmax():
    rng = _rng(6)
    w = rng.normal(size=8)
    return grad_check(lambda t: ad.tsum(ad.mul(ad.softmax(t), w)), rng.normal(size=8))


def check_layer_norm():
    rng = _rng(7)
    gamma = rng.normal(size=6)
    beta = rng.normal(size=6)
    x = rng.normal(size=(4, 6))
    return grad_check(
        lambda t: ad.tsum(ad.layer_norm(t, Tensor(gamma), Tensor(beta)) ** 2.0), x
    )


def check_bilinear_resize():
    rng = _rng(8)
    x = rng.normal(size=(1, 2, 7, 9))
    return grad_check(lambda t: ad.tsum(ad.bilinear_resize(t, 3, 4) ** 2.0), x)


def check_attention():
    rng = _rng(9)
    d, t_len = 8, 5
    mats = {k: Tensor(rng.normal(size=(d, d)) * 0.5) for k in ("wq", "wk", "wv", "wo")}
    biases = {k: Tensor(rng.normal(size=d) * 0.1) for k in ("bq", "bk", "bv", "bo")}
    x = rng.normal(size=(t_len, d))

    def fn(t):
        out = ad.multi_head_attention(
            t, mats["wq"], mats["wk"], mats["wv"], mats["wo"],
            biases["bq"], biases["bk"], biases["bv"], biases["bo"], num_heads=2,
        )
        return ad.tsum(out ** 2.0)

    return grad_check(fn, x)


def check_focal():
    rng = _rng(10)
    gt = (rng.random((6, 6)) > 0.5).astype(np.float64)
    p = rng.uniform(0.05, 0.95, size=(6, 6))
    return grad_check(lambda t: focal_loss(t, gt), p, epsilon=1e-6)


def check_focal_at_point():
    # the documented evaluation point p = 0.7
    gt = np.ones((4, 4))
    p = np.full((4, 4), 0.7)
    return grad_check(lambda t: focal_loss(t, gt), p, epsilon=1e-6)


def check_dice():
    rng = _rng(11)
    gt = (rng.random((6, 6)) > 0.5).astype(np.float64)
    p = rng.uniform(0.05, 0.95, size=(6, 6))
    return grad_check(lambda t: dice_loss(t, gt), p, epsilon=1e-6)


def check_fusion_linears():
    from . import fusion
    from .autodiff import ParamStore
    from .providers import GeometryBundle

    rng = _rng(12)
    c, d_flow, d_cam, n, hw = 3, 4, 5, 2, 6
    params = ParamStore()
    fusion.init_fusion(params, c, d_flow, d_cam, np.random.default_rng(0))
    bundle = GeometryBundle(
        geo_low=rng.normal(size=(n, hw, 2 * c)).astype(np.float32),
        geo_high=rng.normal(size=(n, hw, 2 * c)).astype(np.float32),
        cam=rng.normal(size=(n, hw, d_cam)).astype(np.float32),
        grid=(2, 3), channels=c,
    )
    flow_tokens = rng.normal(size=(n, hw, d_flow)).astype(np.float32)
    w = params["fusion.proj_geo.weight"]

    def fn(t):
        p64 = ParamStore()
        p64.put("fusion.proj_geo.weight", t)
        for name in ("fusion.proj_geo.bias", "fusion.proj_out.weight", "fusion.proj_out.bias"):
            p64.add(name, params[name].data.astype(np.float64))
        out = fusion.aggregate(bundle, flow_tokens.astype(np.float64), p64)
        return ad.tsum(out ** 2.0)

    return grad_check(fn, w.data.astype(np.float64))


def check_flow_cnn():
    from . import flowenc
    from .autodiff import ParamStore

    rng = _rng(13)
    params = ParamStore()
    flowenc.init_flow_encoder(params, 4, np.random.default_rng(0))
    flows = rng.normal(size=(2, 8, 8, 2))
    w = params["flowenc.conv1.weight"]

    def fn(t):
        p = ParamStore()
        p.put("flowenc.conv1.weight", t)
        for name in ("flowenc.conv1.bias", "flowenc.conv2.weight", "flowenc.conv2.bias"):
            p.add(name, params[name].data.astype(np.float64))
        out = flowenc.encode_flow(flows, p, (2, 2), 4)
        return ad.tsum(out ** 2.0)

    return grad_check(fn, w.data.astype(np.float64))


def check_end_to_end():
    """Gradient through fuse -> decode -> mask -> focal+dice at toy scale."""
    from . import decoder, flowenc, fusion
    from .autodiff import ParamStore
    from .model import ModelConfig, MotionSegmenter
    from .providers import GeometryBundle

    rng = _rng(14)
    cfg = ModelConfig(image_size=8, patch_size=4, channels=2, d_flow=2,
                      d_cam=2, num_heads=2, num_layers=1, ffn_expansion=2)
    model = MotionSegmenter(cfg, seed=0)
    n, hw = 2, 4
    bundle = GeometryBundle(
        geo_low=rng.normal(size=(n, hw, 4)).astype(np.float32),
        geo_high=rng.normal(size=(n, hw, 4)).astype(np.float32),
        cam=rng.normal(size=(n, hw, 2)).astype(np.float32),
        grid=(2, 2), channels=2,
    )
    flows = rng.normal(size=(n, 8, 8, 2)).astype(np.float32)
    gts = (rng.random((n, 8, 8)) > 0.5).astype(np.float64)
    target = model.params["decoder.head.weight"]

    def fn(t):
        p64 = ParamStore()
        for name, tensor in model.params.items():
            if name == "decoder.head.weight":
                p64.put(name, t)
            else:
                p64.add(name, tensor.data.astype(np.float64))
        flow_tokens = flowenc.encode_flow(flows.astype(np.float64), p64, cfg.grid, cfg.d_flow)
        fused = fusion.aggregate(bundle, flow_tokens, p64)
        logits = decoder.decode(fused, p64, cfg.decoder_config(), cfg.grid)
        masks = decoder.to_mask(logits, cfg.grid, (8, 8))
        return total_loss(masks, gts, LossConfig())

    return grad_check(fn, target.data.astype(np.float64), epsilon=1e-6)


REGISTRY = {
    "linear": check_linear,
    "conv2d_input": check_conv2d,
    "conv2d_weight": check_conv2d_weights,
    "sigmoid": check_sigmoid,
    "relu": check_relu,
    "softmax": check_softmax,
    "layer_norm": check_layer_norm,
    "bilinear_resize": check_bilinear_resize,
    "attention": check_attention,
    "focal_loss": check_focal,
    "focal_loss_p07": check_focal_at_point,
    "dice_loss": check_dice,
    "fusion_linears": check_fusion_linears,
    "flow_cnn": check_flow_cnn,
    "end_to_end_loss": check_end_to_end,
}


def run_suite(names=None, tolerance=DEFAULT_TOLERANCE):
    """Run registered checks; returns [(name, max_rel_error, passed)]."""
    rows = []
    for name in names or REGISTRY:
        if name not in REGISTRY:
            raise ConfigError(f"unknown gradient check: {name}")
        err = REGISTRY[name]()
        rows.append((name, err, err < tolerance))
    return rows
