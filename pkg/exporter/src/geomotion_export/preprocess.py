"""Frame preprocessing shared with the training pipeline: center-crop to the
largest square, then bilinear-resize to the working resolution. Keeping this
rule identical on both sides keeps exported features aligned with masks."""

import numpy as np
from PIL import Image


def load_frames(frames_dir, image_size):
    """Load an ordered directory of image frames as [N, S, S, 3] uint8."""
    from pathlib import Path

    files = sorted(
        p for p in Path(frames_dir).iterdir()
        if p.suffix.lower() in (".png", ".jpg", ".jpeg")
    )
    if len(files) < 2:
        raise ValueError(f"{frames_dir}: need at least 2 frames, found {len(files)}")
    frames = [center_crop_resize(np.asarray(Image.open(f).convert("RGB")), image_size)
              for f in files]
    return np.stack(frames), [f.name for f in files]


def center_crop_resize(frame, image_size):
    h, w = frame.shape[:2]
    side = min(h, w)
    oy, ox = (h - side) // 2, (w - side) // 2
    cropped = frame[oy : oy + side, ox : ox + side]
    if side == image_size:
        return cropped
    img = Image.fromarray(cropped).resize((image_size, image_size), Image.BILINEAR)
    return np.asarray(img)
