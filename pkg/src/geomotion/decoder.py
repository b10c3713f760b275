"""Motion decoder: positional encodings, five pre-norm self-attention blocks
over all tokens of all frames jointly, a linear head emitting one logit per
pixel of each patch, pixel-shuffle mask assembly, and the refinement hook.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from . import autodiff as ad
from .errors import ConfigError, ShapeContractError


@dataclass
class DecoderConfig:
    width: int  # model width, equals the fusion output width 2C
    patch_size: int
    num_layers: int = 5
    num_heads: int = 4
    ffn_expansion: int = 4
    max_frames: int = 64
    use_positional: bool = True  # off for backbones whose tokens carry position

    def validate(self):
        if self.width % self.num_heads:
            raise ConfigError(
                f"heads ({self.num_heads}) must divide width ({self.width})"
            )


def init_decoder(params, cfg: DecoderConfig, rng, prefix="decoder"):
    cfg.validate()
    d = cfg.width

    def xavier(din, dout):
        bound = np.sqrt(6.0 / (din + dout))
        return rng.uniform(-bound, bound, (din, dout)).astype(np.float32)

    for layer in range(cfg.num_layers):
        p = f"{prefix}.block{layer}"
        params.add(f"{p}.ln1.gamma", np.ones(d, dtype=np.float32))
        params.add(f"{p}.ln1.beta", np.zeros(d, dtype=np.float32))
        for proj in ("wq", "wk", "wv", "wo"):
            params.add(f"{p}.attn.{proj}", xavier(d, d))
            params.add(f"{p}.attn.b{proj[1]}", np.zeros(d, dtype=np.float32))
        params.add(f"{p}.ln2.gamma", np.ones(d, dtype=np.float32))
        params.add(f"{p}.ln2.beta", np.zeros(d, dtype=np.float32))
        hidden = d * cfg.ffn_expansion
        params.add(f"{p}.ffn.w1", xavier(d, hidden))
        params.add(f"{p}.ffn.b1", np.zeros(hidden, dtype=np.float32))
        params.add(f"{p}.ffn.w2", xavier(hidden, d))
        params.add(f"{p}.ffn.b2", np.zeros(d, dtype=np.float32))
    params.add(f"{prefix}.ln_out.gamma", np.ones(d, dtype=np.float32))
    params.add(f"{prefix}.ln_out.beta", np.zeros(d, dtype=np.float32))
    params.add(f"{prefix}.head.weight", xavier(d, cfg.patch_size**2))
    params.add(f"{prefix}.head.bias", np.zeros(cfg.patch_size**2, dtype=np.float32))
    params.add(
        f"{prefix}.temporal",
        rng.normal(0.0, 0.02, (cfg.max_frames, d)).astype(np.float32),
    )


def spatial_positional_table(h, w, width):
    """Fixed 2-D sinusoidal table [h*w, width]: first half encodes rows,
    second half columns, standard sin/cos frequency ladder."""
    half = width // 2
    quarter = max(1, half // 2)
    freqs = np.exp(-np.log(10000.0) * np.arange(quarter) / quarter)

    def encode(pos):
        ang = pos[:, None] * freqs[None, :]
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)[:, :half]

    rows = encode(np.arange(h, dtype=np.float64))  # [h, half]
    cols = encode(np.arange(w, dtype=np.float64))  # [w, half]
    table = np.zeros((h, w, width), dtype=np.float32)
    table[:, :, :half] = rows[:, None, :]
    table[:, :, half : half + cols.shape[1]] = cols[None, :, :]
    return table.reshape(h * w, width)


def decode(fused, params, cfg: DecoderConfig, grid, frame_indices=None,
           prefix="decoder"):
    """fused [N, h*w, width] -> per-patch logits [N, h*w, patch_size**2].

    Attends jointly over all N*h*w tokens of the sequence; sequences are
    never mixed, so batching is by construction independent per sequence.
    """
    fused = ad.as_tensor(fused)
    n, hw, d = fused.data.shape
    h, w = grid
    if hw != h * w:
        raise ShapeContractError(f"fused: {hw} tokens for a {h}x{w} grid")
    if d != cfg.width:
        raise ShapeContractError(
            f"fused: channel width {d} does not match decoder width {cfg.width}"
        )
    if frame_indices is None:
        frame_indices = np.arange(n)
    frame_indices = np.asarray(frame_indices) % cfg.max_frames

    x = fused
    if cfg.use_positional:
        spatial = spatial_positional_table(h, w, d)[None, :, :]
        temporal = ad.index(params[f"{prefix}.temporal"], (frame_indices, slice(None)))
        temporal = ad.reshape(temporal, (n, 1, d))
        x = ad.add(ad.add(x, ad.Tensor(spatial)), temporal)

    x = ad.reshape(x, (n * hw, d))
    for layer in range(cfg.num_layers):
        p = f"{prefix}.block{layer}"
        attn_in = ad.layer_norm(x, params[f"{p}.ln1.gamma"], params[f"{p}.ln1.beta"])
        x = ad.add(x, ad.multi_head_attention(
            attn_in,
            params[f"{p}.attn.wq"], params[f"{p}.attn.wk"],
            params[f"{p}.attn.wv"], params[f"{p}.attn.wo"],
            params[f"{p}.attn.bq"], params[f"{p}.attn.bk"],
            params[f"{p}.attn.bv"], params[f"{p}.attn.bo"],
            cfg.num_heads,
        ))
        ffn_in = ad.layer_norm(x, params[f"{p}.ln2.gamma"], params[f"{p}.ln2.beta"])
        hidden = ad.relu(ad.linear(ffn_in, params[f"{p}.ffn.w1"], params[f"{p}.ffn.b1"]))
        x = ad.add(x, ad.linear(hidden, params[f"{p}.ffn.w2"], params[f"{p}.ffn.b2"]))

    x = ad.layer_norm(x, params[f"{prefix}.ln_out.gamma"], params[f"{prefix}.ln_out.beta"])
    logits = ad.linear(x, params[f"{prefix}.head.weight"], params[f"{prefix}.head.bias"])
    return ad.reshape(logits, (n, hw, cfg.patch_size**2))


def decode_batch(fused_list, params, cfg, grid, **kw):
    """Decode several sequences; attention never crosses sequence boundaries."""
    return [decode(f, params, cfg, grid, **kw) for f in fused_list]


def to_mask(logits, grid, image_size):
    """Per-patch logits [N, h*w, P^2] -> per-pixel probabilities [N, H, W].

    Each token's P^2 logits fill its P x P pixel block row-major
    (pixel shuffle), then sigmoid maps to [0, 1].
    """
    logits = ad.as_tensor(logits)
    n, hw, pp = logits.data.shape
    h, w = grid
    hh, ww = image_size
    p = int(round(np.sqrt(pp)))
    if p * p != pp:
        raise ShapeContractError(f"head width {pp} is not a square patch")
    if h * p != hh or w * p != ww:
        raise ShapeContractError(
            f"grid {grid} with patch {p} does not tile image {image_size}"
        )
    x = ad.reshape(logits, (n, h, w, p, p))
    x = ad.transpose(x, (0, 1, 3, 2, 4))  # [N, h, P, w, P]
    x = ad.reshape(x, (n, hh, ww))
    return ad.sigmoid(x)


# ---------------------------------------------------------------------------
# refinement hook


def default_refiner(frames, masks, target_size=None):
    """Built-in refinement: bilinear upsample to the target size (when it
    differs) and binarize at 0.5."""
    masks = np.asarray(masks, dtype=np.float32)
    if target_size is not None and target_size != masks.shape[1:]:
        th, tw = target_size
        masks = K.bilinear_resize_forward(
            np.ascontiguousarray(masks[:, None]), th, tw
        )[:, 0]
    return (masks > 0.5).astype(np.float32)


def identity_refiner(frames, masks, target_size=None):
    return masks


def refine(masks, frames=None, hook=None, target_size=None):
    """Run a refinement hook over coarse masks. Hooks receive (frames,
    masks) and must return masks of the same leading shape in [0, 1]."""
    masks = np.asarray(masks, dtype=np.float32)
    hook = hook or default_refiner
    refined = np.asarray(hook(frames, masks, target_size=target_size), dtype=np.float32)
    expect = masks.shape if target_size is None else (masks.shape[0], *target_size)
    if refined.shape != expect:
        raise ShapeContractError(
            f"refinement hook returned shape {refined.shape}, expected {expect}"
        )
    if refined.min() < 0 or refined.max() > 1:
        raise ShapeContractError("refinement hook returned values outside [0, 1]")
    return refined
