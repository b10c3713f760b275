"""Geometry-token providers: the abstraction over the frozen visual geometry
backbone. Two implementations share one interface so the pipeline never
cares where tokens come from:

* synthetic -- deterministic tokens derived from ground-truth scene state,
  emulating what shallow layers (appearance, object structure), deep layers
  (motion-coherent geometry), and the camera decoder would supply;
* file -- tokens loaded from GMT1 tensors written by an exporter.

Provider output is frozen: downstream consumers receive plain arrays, never
gradient-bearing tensors.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio
from .errors import ConfigError, DataError, ShapeContractError

FILE_NAMES = {"geo_low": "geo_low.gmt1", "geo_high": "geo_high.gmt1", "cam": "cam.gmt1"}


@dataclass
class GeometryBundle:
    """Per-frame patch tokens from the geometry backbone."""

    geo_low: np.ndarray  # [N, h*w, 2C]
    geo_high: np.ndarray  # [N, h*w, 2C]
    cam: np.ndarray  # [N, h*w, D_cam]
    grid: tuple  # (h, w)
    channels: int  # C

    def validate(self):
        n, hw = self.geo_low.shape[:2]
        h, w = self.grid
        if hw != h * w:
            raise ShapeContractError(f"geo_low: {hw} tokens for grid {self.grid}")
        for name in ("geo_low", "geo_high"):
            arr = getattr(self, name)
            if arr.shape != (n, hw, 2 * self.channels):
                raise ShapeContractError(
                    f"{name}: shape {arr.shape}, expected {(n, hw, 2 * self.channels)}"
                )
        if self.cam.shape[:2] != (n, hw):
            raise ShapeContractError(
                f"cam: leading shape {self.cam.shape[:2]}, expected {(n, hw)}"
            )
        for name in ("geo_low", "geo_high", "cam"):
            if not np.isfinite(getattr(self, name)).all():
                raise DataError(f"{name}: contains non-finite values")


@dataclass
class ProviderSpec:
    kind: str = "synthetic"  # synthetic | file
    dataset_dir: str | None = None  # file kind: root holding <seq>/*.gmt1
    noise_amplitude: float = 0.0  # synthetic kind: additive Gaussian sigma
    depth_cue_weight: float = 1.0  # synthetic kind: strength of the depth proxy

    def validate(self):
        if self.kind not in ("synthetic", "file"):
            raise ConfigError(f"unknown provider kind: {self.kind}")
        if self.kind == "file" and not self.dataset_dir:
            raise ConfigError("file provider needs dataset_dir")

    def to_dict(self):
        return {
            "kind": self.kind,
            "dataset_dir": self.dataset_dir,
            "noise_amplitude": self.noise_amplitude,
            "depth_cue_weight": self.depth_cue_weight,
        }


def provide(seq, spec: ProviderSpec, grid, c, d_cam) -> GeometryBundle:
    """Produce the token bundle for one sequence, per the provider spec."""
    spec.validate()
    _check_grid(seq.image_size, grid)
    if spec.kind == "synthetic":
        return synthetic_tokens(seq, spec, grid, c, d_cam)
    return file_tokens(seq, spec, grid, c, d_cam)


def _check_grid(image_size, grid):
    hh, ww = image_size
    h, w = grid
    if hh % h or ww % w:
        raise ConfigError(f"grid {grid} does not divide image {image_size}")
    if hh // h != ww // w:
        raise ConfigError(f"grid {grid} implies a non-square patch for {image_size}")


def _patch_mean(field, grid):
    """Average a [N, H, W] field over each patch -> [N, h*w]."""
    n, hh, ww = field.shape
    h, w = grid
    ph, pw = hh // h, ww // w
    return (
        field.reshape(n, h, ph, w, pw).mean(axis=(2, 4)).reshape(n, h * w)
    )


def synthetic_tokens(seq, spec: ProviderSpec, grid, c, d_cam) -> GeometryBundle:
    """Tokens derived from ground-truth scene state, deterministic in
    (sequence, spec).

    geo_low : patch appearance statistics and an object-presence cue;
    geo_high: a motion-coherence cue, the fraction of patch pixels moving
              with the camera, plus a depth proxy;
    cam     : the frame's camera translation broadcast to every patch.
    Seeded Gaussian noise of the configured amplitude is added to all three.
    """
    n = seq.num_frames
    h, w = grid
    hw = h * w
    gray = seq.frames.astype(np.float32).mean(axis=-1) / 255.0
    mean = _patch_mean(gray, grid)
    sq = _patch_mean(gray * gray, grid)
    std = np.sqrt(np.maximum(0.0, sq - mean * mean))

    if getattr(seq, "surfaces", None) is not None:
        presence = _patch_mean((seq.surfaces >= 0).astype(np.float32), grid)
    else:
        presence = _patch_mean(seq.masks.astype(np.float32), grid)
    coherence = 1.0 - _patch_mean(seq.masks.astype(np.float32), grid)

    # every geo_low / cam channel carries signal (cues tiled across the
    # width) so disabling a modality removes information, not just noise;
    # appearance statistics dominate the layout, presence appears once
    geo_low = np.zeros((n, hw, 2 * c), dtype=np.float32)
    geo_low[..., 0::2] = mean[..., None]
    geo_low[..., 1::2] = std[..., None]
    geo_low[..., 2] = presence

    geo_high = np.zeros((n, hw, 2 * c), dtype=np.float32)
    geo_high[..., 0] = coherence
    geo_high[..., 1] = spec.depth_cue_weight * presence

    cam = np.zeros((n, hw, d_cam), dtype=np.float32)
    cam[..., 0::2] = seq.camera[:, None, 0:1]
    cam[..., 1::2] = seq.camera[:, None, 1:2]

    if spec.noise_amplitude > 0:
        # systematic per-content noise: one draw per (patch, channel),
        # persistent across frames, like a frozen backbone's feature bias;
        # it cannot be averaged away over time, only corroborated away
        rng = np.random.default_rng([int(getattr(seq, "seed", 0)), 0x70])
        geo_low = geo_low + rng.normal(
            0, spec.noise_amplitude, geo_low.shape[1:]).astype(np.float32)
        geo_high = geo_high + rng.normal(
            0, spec.noise_amplitude, geo_high.shape[1:]).astype(np.float32)
        cam = cam + rng.normal(
            0, spec.noise_amplitude, cam.shape[1:]).astype(np.float32)

    bundle = GeometryBundle(geo_low=geo_low, geo_high=geo_high, cam=cam, grid=grid, channels=c)
    bundle.validate()
    return bundle


def file_tokens(seq, spec: ProviderSpec, grid, c, d_cam) -> GeometryBundle:
    """Load the bundle from <dataset>/<seq>/{geo_low,geo_high,cam}.gmt1."""
    seq_dir = Path(spec.dataset_dir) / seq.name
    arrays = {}
    for key, fname in FILE_NAMES.items():
        path = seq_dir / fname
        if not path.is_file():
            raise DataError(f"missing provider file: {path}")
        arrays[key] = dataio.read_tensor(path)
    n = seq.num_frames
    hw = grid[0] * grid[1]
    expected = {
        "geo_low": (n, hw, 2 * c),
        "geo_high": (n, hw, 2 * c),
        "cam": (n, hw, d_cam),
    }
    for key, shape in expected.items():
        if arrays[key].shape != shape:
            raise ShapeContractError(
                f"{key}: file shape {arrays[key].shape}, declared {shape}"
            )
        if not np.isfinite(arrays[key]).all():
            raise DataError(f"{key}: non-finite values in {seq_dir / FILE_NAMES[key]}")
    bundle = GeometryBundle(
        geo_low=arrays["geo_low"], geo_high=arrays["geo_high"], cam=arrays["cam"],
        grid=grid, channels=c,
    )
    bundle.validate()
    return bundle


def export_bundle(bundle: GeometryBundle, seq_dir) -> None:
    """Write a bundle in the file-provider layout (used for the provider
    swap test and for debugging feature pipelines)."""
    seq_dir = Path(seq_dir)
    seq_dir.mkdir(parents=True, exist_ok=True)
    dataio.write_tensor(seq_dir / FILE_NAMES["geo_low"], bundle.geo_low)
    dataio.write_tensor(seq_dir / FILE_NAMES["geo_high"], bundle.geo_high)
    dataio.write_tensor(seq_dir / FILE_NAMES["cam"], bundle.cam)
