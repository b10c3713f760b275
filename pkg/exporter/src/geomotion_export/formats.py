"""Writers for the interchange formats the segmentation pipeline reads:
Middlebury .flo flow files and GMT1 tensor files. Byte layouts are fixed
and little-endian; the consumer's readers round-trip them bitwise."""

import struct
from pathlib import Path

import numpy as np

FLO_MAGIC = 202021.25
GMT1_MAGIC = b"GMT1"
GMT1_FLOAT32 = 1


def write_flo(path, vectors) -> int:
    """vectors: [H, W, 2] float32 (u, v) per pixel. Layout: float32 magic,
    int32 width, int32 height, row-major interleaved float32 pairs."""
    arr = np.ascontiguousarray(vectors, dtype="<f4")
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError(f"flow must be [H, W, 2], got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("flow contains non-finite values")
    h, w = arr.shape[:2]
    data = struct.pack("<fii", FLO_MAGIC, w, h) + arr.tobytes()
    Path(path).write_bytes(data)
    return len(data)


def write_gmt1(path, array) -> int:
    """Layout: magic "GMT1", u8 dtype code (1 = float32 LE), u8 rank, two
    zero pad bytes, rank x u64 extents, row-major payload."""
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    if not np.isfinite(arr).all():
        raise ValueError("tensor contains non-finite values")
    header = GMT1_MAGIC + struct.pack("<BBxx", GMT1_FLOAT32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    data = header + arr.tobytes()
    Path(path).write_bytes(data)
    return len(data)
