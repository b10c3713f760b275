"""Segmentation evaluation: region similarity J, boundary similarity F,
their average, region recall J_R (strictly J > 0.5), mean IoU J_M
aggregated over sequences, and inference-runtime benchmarking.
"""

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import binary_dilation

from .errors import DataError, ShapeContractError


def _as_bool(mask, name):
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ShapeContractError(f"{name}: expected a 2-D mask, got {arr.shape}")
    return arr.astype(bool)


def region_j(pred, gt) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    pred = _as_bool(pred, "pred")
    gt = _as_bool(gt, "gt")
    if pred.shape != gt.shape:
        raise ShapeContractError(f"pred {pred.shape} vs gt {gt.shape}")
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, gt).sum() / union)


def mask_boundary(mask) -> np.ndarray:
    """1-px boundary: foreground pixels 4-adjacent to background or to the
    image border."""
    m = np.asarray(mask).astype(bool)
    padded = np.pad(m, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return m & ~interior


def disk_structure(radius: int) -> np.ndarray:
    r = int(radius)
    ys, xs = np.mgrid[-r : r + 1, -r : r + 1]
    return ys * ys + xs * xs <= r * r


def default_tolerance(shape) -> int:
    """Boundary matching tolerance: ceil(0.0075 x image diagonal), the
    common video-segmentation convention."""
    h, w = shape
    return int(math.ceil(0.0075 * math.sqrt(h * h + w * w)))


def boundary_f(pred, gt, tolerance=None) -> float:
    """F-measure over boundary pixels matched within `tolerance` (disk
    dilation). 1.0 when both boundaries are empty, 0.0 when precision and
    recall are both zero."""
    pred = _as_bool(pred, "pred")
    gt = _as_bool(gt, "gt")
    if pred.shape != gt.shape:
        raise ShapeContractError(f"pred {pred.shape} vs gt {gt.shape}")
    if tolerance is None:
        tolerance = default_tolerance(pred.shape)
    if tolerance < 0:
        raise ShapeContractError("tolerance must be >= 0")
    pb = mask_boundary(pred)
    gb = mask_boundary(gt)
    if not pb.any() and not gb.any():
        return 1.0
    if not pb.any() or not gb.any():
        return 0.0
    struct = disk_structure(tolerance)
    if tolerance == 0:
        gb_dil, pb_dil = gb, pb
    else:
        gb_dil = binary_dilation(gb, structure=struct)
        pb_dil = binary_dilation(pb, structure=struct)
    precision = float((pb & gb_dil).sum() / pb.sum())
    recall = float((gb & pb_dil).sum() / gb.sum())
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# dataset-level aggregation


@dataclass
class SegReport:
    per_sequence: dict = field(default_factory=dict)  # name -> {"J": [...], "F": [...]}
    j_m: float = 0.0  # mean over sequences of per-sequence mean J
    f_m: float = 0.0
    jf: float = 0.0  # (J_M + F_M) / 2
    j_r: float = 0.0  # fraction of all frames with J strictly > 0.5
    frames: int = 0
    runtime_per_frame: float | None = None

    def to_dict(self):
        return {
            "J_M": self.j_m,
            "F_M": self.f_m,
            "J&F": self.jf,
            "J_R": self.j_r,
            "frames": self.frames,
            "runtime_per_frame": self.runtime_per_frame,
            "per_sequence": {
                name: {
                    "J": vals["J"],
                    "F": vals["F"],
                    "J_mean": float(np.mean(vals["J"])),
                    "F_mean": float(np.mean(vals["F"])),
                }
                for name, vals in self.per_sequence.items()
            },
        }

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sequence", "frame", "J", "F"])
            for name, vals in self.per_sequence.items():
                for t, (j, f) in enumerate(zip(vals["J"], vals["F"])):
                    writer.writerow([name, t, f"{j:.6f}", f"{f:.6f}"])
            writer.writerow([])
            writer.writerow(["J_M", "F_M", "J&F", "J_R"])
            writer.writerow([f"{self.j_m:.6f}", f"{self.f_m:.6f}",
                             f"{self.jf:.6f}", f"{self.j_r:.6f}"])


def evaluate_masks(pred_sequences, gt_sequences, threshold=0.5, tolerance=None,
                   names=None) -> SegReport:
    """Score in-memory predictions: each element is [N, H, W]; predictions
    are probabilities binarized at `threshold` (strict), ground truth is
    binary."""
    report = SegReport()
    all_j = []
    seq_j, seq_f = [], []
    for idx, (preds, gts) in enumerate(zip(pred_sequences, gt_sequences)):
        name = names[idx] if names else f"seq{idx:03d}"
        preds = np.asarray(preds)
        gts = np.asarray(gts)
        if preds.shape != gts.shape:
            raise ShapeContractError(
                f"{name}: prediction shape {preds.shape} vs ground truth {gts.shape}"
            )
        js, fs = [], []
        for t in range(preds.shape[0]):
            binary = preds[t] > threshold
            js.append(region_j(binary, gts[t]))
            fs.append(boundary_f(binary, gts[t], tolerance))
        report.per_sequence[name] = {"J": js, "F": fs}
        seq_j.append(float(np.mean(js)))
        seq_f.append(float(np.mean(fs)))
        all_j.extend(js)
    if not all_j:
        raise DataError("no frames to evaluate")
    report.j_m = float(np.mean(seq_j))
    report.f_m = float(np.mean(seq_f))
    report.jf = (report.j_m + report.f_m) / 2.0
    report.j_r = float(np.mean([j > 0.5 for j in all_j]))
    report.frames = len(all_j)
    return report


def evaluate_dataset(pred_dir, gt_dir, threshold=0.5, tolerance=None) -> SegReport:
    """Score a prediction directory against ground truth. Both roots hold
    one subdirectory per sequence with matching PNG frame names; predictions
    are 8-bit grayscale probabilities, ground truth is binary masks."""
    from . import dataio

    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    if not gt_dir.is_dir():
        raise DataError(f"ground-truth directory not found: {gt_dir}")
    if not pred_dir.is_dir():
        raise DataError(f"prediction directory not found: {pred_dir}")
    gt_seqs = sorted(d for d in gt_dir.iterdir() if d.is_dir())
    if not gt_seqs:
        raise DataError(f"{gt_dir}: no sequence directories")
    missing = []
    preds, gts, names = [], [], []
    for gt_seq in gt_seqs:
        pred_seq = pred_dir / gt_seq.name
        gt_files = sorted(gt_seq.glob("*.png"))
        frame_preds, frame_gts = [], []
        for gt_file in gt_files:
            pred_file = pred_seq / gt_file.name
            if not pred_file.is_file():
                missing.append(str(pred_file))
                continue
            frame_preds.append(dataio.read_gray_png(pred_file))
            frame_gts.append(dataio.read_mask_png(gt_file))
        if frame_preds:
            preds.append(np.stack(frame_preds))
            gts.append(np.stack(frame_gts))
            names.append(gt_seq.name)
    if missing:
        raise DataError("missing prediction frames:\n" + "\n".join(missing))
    return evaluate_masks(preds, gts, threshold, tolerance, names)


def bench_runtime(checkpoint_dir, seq, provider_spec, repetitions=3) -> dict:
    """Median seconds per frame for end-to-end inference on one sequence,
    excluding disk IO: the model and features are loaded up front and only
    the forward pass is timed."""
    from .model import MotionSegmenter

    model = MotionSegmenter.load(checkpoint_dir)
    bundle, flows = model.prepare_inputs(seq, provider_spec)
    times = []
    for _ in range(max(1, int(repetitions))):
        t0 = time.perf_counter()
        model.predict_prepared(bundle, flows)
        times.append((time.perf_counter() - t0) / seq.num_frames)
    return {
        "seconds_per_frame": float(np.median(times)),
        "repetitions": len(times),
        "frames": int(seq.num_frames),
        "samples": times,
    }
