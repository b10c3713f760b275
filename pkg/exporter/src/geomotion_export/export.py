"""Export job: run a geometry backbone and a flow estimator over a frame
directory and write the file-provider layout the segmentation pipeline
consumes: geo_low.gmt1, geo_high.gmt1, cam.gmt1 (all [N, hw, .]),
flows/*.flo (N-1 files), and meta.json. Shapes are validated before
anything is written; a job never leaves a partial dataset behind."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats, models, preprocess


@dataclass
class ExportJob:
    frames_dir: str
    output_dir: str
    backbone: str = "mock"
    flow: str = "blockmatch"
    image_size: int = 518
    patch_size: int = 14
    channels: int = 1024  # per-layer width C; streams carry 2C
    d_cam: int = 512
    seed: int = 0

    def validate(self):
        if self.image_size % self.patch_size:
            raise ValueError(
                f"patch size {self.patch_size} does not divide image size "
                f"{self.image_size}"
            )


class ShapeContractViolation(ValueError):
    pass


def run_export(job: ExportJob) -> Path:
    job.validate()
    backbone = models.load_backbone(job.backbone, job.channels, job.d_cam,
                                    job.patch_size, seed=job.seed)
    flow_model = models.load_flow(job.flow)

    frames, frame_names = preprocess.load_frames(job.frames_dir, job.image_size)
    n = frames.shape[0]
    grid_side = job.image_size // job.patch_size
    hw = grid_side * grid_side

    geo_low, geo_high, cam, grid = backbone.extract(frames)
    flows = flow_model.estimate(frames)

    expected = {
        "geo_low": ((n, hw, 2 * job.channels), geo_low),
        "geo_high": ((n, hw, 2 * job.channels), geo_high),
        "cam": ((n, hw, job.d_cam), cam),
        "flows": ((n - 1, job.image_size, job.image_size, 2), flows),
    }
    for name, (shape, arr) in expected.items():
        if tuple(arr.shape) != shape:
            raise ShapeContractViolation(
                f"{name}: produced shape {tuple(arr.shape)}, contract requires "
                f"{shape}; refusing to write a partial dataset"
            )
        if not np.isfinite(arr).all():
            raise ShapeContractViolation(f"{name}: non-finite values")

    out = Path(job.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_gmt1(out / "geo_low.gmt1", geo_low)
    formats.write_gmt1(out / "geo_high.gmt1", geo_high)
    formats.write_gmt1(out / "cam.gmt1", cam)
    flow_dir = out / "flows"
    flow_dir.mkdir(exist_ok=True)
    for t in range(n - 1):
        formats.write_flo(flow_dir / f"{t:05d}.flo", flows[t])

    meta = {
        "frames": frame_names,
        "grid": list(grid),
        "channels": job.channels,
        "d_cam": job.d_cam,
        "image_size": job.image_size,
        "patch_size": job.patch_size,
        "backbone": backbone.describe(),
        "flow": flow_model.describe(),
        "preprocessing": "center-crop largest square, bilinear resize",
        "layer_tap": "post-residual block output",
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return out


def photometric_error(frames, flows) -> float:
    """Mean absolute grayscale error of warping frame t+1 back onto frame t
    with the given flow; the zero-flow baseline is photometric_error(frames,
    zeros). Used to sanity-check that exported flow tracks real motion."""
    gray = frames.astype(np.float64).mean(axis=-1)
    n, h, w = gray.shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    total, count = 0.0, 0
    for t in range(n - 1):
        ty = np.clip(ys + flows[t, ..., 1], 0, h - 1)
        tx = np.clip(xs + flows[t, ..., 0], 0, w - 1)
        y0 = np.floor(ty).astype(np.intp)
        x0 = np.floor(tx).astype(np.intp)
        y1 = np.minimum(y0 + 1, h - 1)
        x1 = np.minimum(x0 + 1, w - 1)
        fy, fx = ty - y0, tx - x0
        nxt = gray[t + 1]
        warped = ((nxt[y0, x0] * (1 - fx) + nxt[y0, x1] * fx) * (1 - fy)
                  + (nxt[y1, x0] * (1 - fx) + nxt[y1, x1] * fx) * fy)
        total += np.abs(warped - gray[t]).sum()
        count += gray[t].size
    return total / count
