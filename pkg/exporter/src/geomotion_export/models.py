"""Backbone and flow-estimator adapters.

Backbones yield per-frame patch tokens for two geometry streams (shallow
layers 5+15 concatenated, deep layers 35+36 concatenated) plus camera
tokens. Flow estimators yield dense (u, v) fields between consecutive
frames.

Adapter specs (CLI `--backbone` / `--flow`):
  mock                      deterministic NumPy stand-ins, no downloads
  blockmatch[:radius]       integer block-matching flow, no downloads
  torchvision-raft-small    RAFT via torchvision (needs downloadable weights)
  torchvision-raft-large
  torchhub:<repo>:<entry>   any ViT-style torch module exposing .blocks
"""

import numpy as np

SHALLOW_LAYERS = (5, 15)
DEEP_LAYERS = (35, 36)
NUM_LAYERS = 36


class ModelLoadError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# backbones


class MockBackbone:
    """Deterministic stand-in: per-layer tokens are fixed random projections
    of raw patch pixels, squashed with tanh. Depth only changes the
    projection, which is enough to exercise the export contract."""

    name = "mock"

    def __init__(self, channels, d_cam, patch_size, seed=0):
        self.channels = channels
        self.d_cam = d_cam
        self.patch_size = patch_size
        self.seed = seed

    def _project(self, patches, layer, width):
        rng = np.random.default_rng([self.seed, layer])
        proj = rng.normal(0, 1.0 / np.sqrt(patches.shape[-1]),
                          (patches.shape[-1], width)).astype(np.float32)
        return np.tanh(patches @ proj)

    def _patchify(self, frames):
        n, hh, ww, _ = frames.shape
        p = self.patch_size
        h, w = hh // p, ww // p
        x = frames.astype(np.float32) / 255.0
        x = x[:, : h * p, : w * p].reshape(n, h, p, w, p, 3)
        return x.transpose(0, 1, 3, 2, 4, 5).reshape(n, h * w, p * p * 3), (h, w)

    def extract(self, frames):
        patches, grid = self._patchify(frames)
        layers = {
            layer: self._project(patches, layer, self.channels)
            for layer in (*SHALLOW_LAYERS, *DEEP_LAYERS)
        }
        geo_low = np.concatenate([layers[i] for i in SHALLOW_LAYERS], axis=-1)
        geo_high = np.concatenate([layers[i] for i in DEEP_LAYERS], axis=-1)
        cam = self._project(patches.mean(axis=1, keepdims=True), NUM_LAYERS + 1,
                            self.d_cam)
        cam = np.broadcast_to(cam, (frames.shape[0], patches.shape[1], self.d_cam))
        return geo_low, geo_high, np.ascontiguousarray(cam), grid

    def describe(self):
        return {"kind": "mock", "seed": self.seed,
                "shallow_layers": list(SHALLOW_LAYERS),
                "deep_layers": list(DEEP_LAYERS)}


class TorchBlocksBackbone:
    """Layer taps on a ViT-style torch module exposing `.blocks`: shallow
    (5, 15) and deep (35, 36) block outputs, post residual, concatenated per
    stream. Camera tokens default to a broadcast mean of the deep stream
    unless the module has a pose/camera head."""

    def __init__(self, spec, channels, d_cam, patch_size):
        try:
            import torch
        except ImportError as exc:
            raise ModelLoadError("torch is not installed") from exc
        self.torch = torch
        _, repo, entry = spec.split(":", 2)
        try:
            self.module = torch.hub.load(repo, entry)
        except Exception as exc:
            raise ModelLoadError(f"cannot load {spec}: {exc}") from exc
        if not hasattr(self.module, "blocks"):
            raise ModelLoadError(f"{spec}: module has no .blocks to tap")
        self.module.eval()
        self.spec = spec
        self.channels = channels
        self.d_cam = d_cam
        self.patch_size = patch_size

    def extract(self, frames):
        torch = self.torch
        taps = {}
        blocks = list(self.module.blocks)
        depth = len(blocks)
        wanted = sorted({min(i, depth) for i in (*SHALLOW_LAYERS, *DEEP_LAYERS)})
        handles = [
            blocks[i - 1].register_forward_hook(
                lambda m, inp, out, i=i: taps.__setitem__(i, out)
            )
            for i in wanted
        ]
        x = torch.from_numpy(
            (frames.astype(np.float32) / 255.0).transpose(0, 3, 1, 2)
        )
        with torch.no_grad():
            self.module(x)
        for h in handles:
            h.remove()

        def stream(indices):
            parts = []
            for i in indices:
                t = taps[min(i, depth)]
                if t.ndim == 3 and t.shape[1] > 1:  # drop a class token if present
                    hw = (frames.shape[1] // self.patch_size) * (
                        frames.shape[2] // self.patch_size
                    )
                    t = t[:, -hw:]
                parts.append(t[..., : self.channels])
            return torch.cat(parts, dim=-1).cpu().numpy().astype(np.float32)

        geo_low = stream(SHALLOW_LAYERS)
        geo_high = stream(DEEP_LAYERS)
        cam = geo_high.mean(axis=2, keepdims=True)
        cam = np.broadcast_to(cam, (*geo_high.shape[:2], self.d_cam))
        grid = (frames.shape[1] // self.patch_size, frames.shape[2] // self.patch_size)
        return geo_low, geo_high, np.ascontiguousarray(cam), grid

    def describe(self):
        return {"kind": self.spec, "shallow_layers": list(SHALLOW_LAYERS),
                "deep_layers": list(DEEP_LAYERS), "cam_source": "broadcast-mean"}


# ---------------------------------------------------------------------------
# flow estimators


class BlockMatchFlow:
    """Integer block-matching flow: per block, the displacement in a search
    window minimizing the sum of absolute grayscale differences. Crude but
    real; it beats the zero-flow baseline on genuinely moving content."""

    def __init__(self, block=8, radius=4):
        self.block = block
        self.radius = radius

    def estimate(self, frames):
        gray = frames.astype(np.float32).mean(axis=-1)
        n, h, w = gray.shape
        b, r = self.block, self.radius
        hb, wb = h // b, w // b
        flows = np.zeros((n - 1, h, w, 2), dtype=np.float32)
        offsets = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]
        for t in range(n - 1):
            cur, nxt = gray[t], gray[t + 1]
            best_err = np.full((hb, wb), np.inf, dtype=np.float32)
            best = np.zeros((hb, wb, 2), dtype=np.float32)
            for dy, dx in offsets:
                shifted = np.full_like(nxt, np.inf)
                ys = slice(max(0, dy), min(h, h + dy))
                xs = slice(max(0, dx), min(w, w + dx))
                ys_src = slice(max(0, -dy), min(h, h - dy))
                xs_src = slice(max(0, -dx), min(w, w - dx))
                shifted[ys_src, xs_src] = nxt[ys, xs]
                diff = np.abs(shifted - cur)
                diff[~np.isfinite(diff)] = 1e9
                err = diff[: hb * b, : wb * b].reshape(hb, b, wb, b).sum(axis=(1, 3))
                improved = err < best_err
                best_err = np.where(improved, err, best_err)
                best[improved] = (dx, dy)
            flows[t, : hb * b, : wb * b] = np.repeat(
                np.repeat(best, b, axis=0), b, axis=1
            )
        return flows

    def describe(self):
        return {"kind": "blockmatch", "block": self.block, "radius": self.radius}


class TorchvisionRaftFlow:
    def __init__(self, variant="small"):
        try:
            import torch
            from torchvision.models import optical_flow as of
        except ImportError as exc:
            raise ModelLoadError("torchvision is not installed") from exc
        self.torch = torch
        try:
            if variant == "small":
                weights = of.Raft_Small_Weights.DEFAULT
                self.model = of.raft_small(weights=weights)
            else:
                weights = of.Raft_Large_Weights.DEFAULT
                self.model = of.raft_large(weights=weights)
        except Exception as exc:
            raise ModelLoadError(f"cannot load RAFT weights: {exc}") from exc
        self.model.eval()
        self.variant = variant

    def estimate(self, frames):
        torch = self.torch
        x = torch.from_numpy(
            (frames.astype(np.float32) / 127.5 - 1.0).transpose(0, 3, 1, 2)
        )
        flows = []
        with torch.no_grad():
            for t in range(frames.shape[0] - 1):
                pred = self.model(x[t : t + 1], x[t + 1 : t + 2])[-1]
                flows.append(pred[0].permute(1, 2, 0).cpu().numpy())
        return np.stack(flows).astype(np.float32)

    def describe(self):
        return {"kind": f"torchvision-raft-{self.variant}"}


# ---------------------------------------------------------------------------
# factories


def load_backbone(spec, channels, d_cam, patch_size, seed=0):
    if spec == "mock":
        return MockBackbone(channels, d_cam, patch_size, seed=seed)
    if spec.startswith("torchhub:"):
        return TorchBlocksBackbone(spec, channels, d_cam, patch_size)
    raise ModelLoadError(f"unknown backbone spec: {spec}")


def load_flow(spec):
    if spec == "mock" or spec.startswith("blockmatch"):
        radius = 4
        if ":" in spec:
            radius = int(spec.split(":", 1)[1])
        return BlockMatchFlow(radius=radius)
    if spec == "torchvision-raft-small":
        return TorchvisionRaftFlow("small")
    if spec == "torchvision-raft-large":
        return TorchvisionRaftFlow("large")
    raise ModelLoadError(f"unknown flow spec: {spec}")
