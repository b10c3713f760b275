import numpy as np
import pytest
from PIL import Image


@pytest.fixture()
def moving_clip(tmp_path):
    """Two 64x64 frames: textured background shifted by (1, 0) with a
    12x12 block moving by (4, 2); enough real motion for flow sanity
    checks."""
    rng = np.random.default_rng(0)
    canvas = rng.integers(40, 216, size=(80, 80, 3), dtype=np.uint8)
    block = rng.integers(40, 216, size=(12, 12, 3), dtype=np.uint8)
    frames = []
    for t in range(2):
        ox = t  # camera pan (1, 0)
        frame = canvas[8 : 72, 8 - ox : 72 - ox].copy()
        y, x = 20 + 2 * t, 24 + 4 * t
        frame[y : y + 12, x : x + 12] = block
        frames.append(frame)
    frames_dir = tmp_path / "clip"
    frames_dir.mkdir()
    for t, frame in enumerate(frames):
        Image.fromarray(frame).save(frames_dir / f"{t:05d}.png")
    return frames_dir, np.stack(frames)
