"""On-disk formats: Middlebury .flo flow, GMT1 tensors, PNG masks and frames,
JSON manifests, and checkpoint directories.

All multi-byte fields are little-endian regardless of host. Every format
round-trips bitwise on valid input.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, FormatError

FLO_MAGIC = 202021.25
GMT1_MAGIC = b"GMT1"
GMT1_DTYPES = {1: np.dtype("<f4")}
MASK_THRESHOLD = 127  # stored pixel values above this read back as foreground


@dataclass
class FlowField:
    """Dense per-pixel (u, v) displacement in pixels, row-major."""

    width: int
    height: int
    vectors: np.ndarray  # [H, W, 2] float32

    def validate(self):
        if self.vectors.shape != (self.height, self.width, 2):
            raise DataError(
                f"flow vectors shape {self.vectors.shape} does not match "
                f"{self.height}x{self.width}x2"
            )
        if self.vectors.size and not np.isfinite(self.vectors).all():
            raise DataError("flow contains non-finite components")

    @classmethod
    def from_array(cls, vectors):
        arr = np.ascontiguousarray(vectors, dtype=np.float32)
        f = cls(width=arr.shape[1], height=arr.shape[0], vectors=arr)
        f.validate()
        return f


def write_flo(flow: FlowField, destination) -> int:
    """Write Middlebury .flo: float32 magic, int32 width/height, then
    height x width interleaved (u, v) float32 pairs. Returns bytes written."""
    flow.validate()
    payload = np.ascontiguousarray(flow.vectors, dtype="<f4").tobytes()
    header = struct.pack("<fii", FLO_MAGIC, flow.width, flow.height)
    data = header + payload
    Path(destination).write_bytes(data)
    return len(data)


def read_flo(source) -> FlowField:
    raw = Path(source).read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{source}: too short for a .flo header")
    magic, width, height = struct.unpack_from("<fii", raw, 0)
    if magic != np.float32(FLO_MAGIC):
        raise FormatError(f"{source}: bad magic {magic!r}, expected {FLO_MAGIC}")
    if width < 0 or height < 0:
        raise FormatError(f"{source}: negative dimensions {width}x{height}")
    expected = 12 + width * height * 8
    if len(raw) != expected:
        raise FormatError(
            f"{source}: payload length mismatch, file has {len(raw)} bytes "
            f"but {width}x{height} needs {expected}"
        )
    vectors = np.frombuffer(raw, dtype="<f4", offset=12).reshape(height, width, 2)
    return FlowField(width=width, height=height, vectors=vectors.copy())


def write_tensor(path, array) -> int:
    """Write a GMT1 tensor file: magic "GMT1", u8 dtype code, u8 rank, two
    zero pad bytes, rank u64 little-endian extents, row-major payload."""
    arr = np.asarray(array)
    if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)  # keeps rank-0 arrays rank 0
    if arr.dtype != np.float32:
        raise FormatError(f"GMT1 supports float32 payloads only, got {arr.dtype}")
    if arr.size and not np.isfinite(arr).all():
        raise DataError("refusing to write non-finite tensor")
    header = GMT1_MAGIC + struct.pack("<BBxx", 1, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    data = header + arr.astype("<f4", copy=False).tobytes()
    Path(path).write_bytes(data)
    return len(data)


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != GMT1_MAGIC:
        raise FormatError(f"{path}: not a GMT1 tensor file")
    code, rank = struct.unpack_from("<BBxx", raw, 4)
    if code not in GMT1_DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    dtype = GMT1_DTYPES[code]
    offset = 8 + 8 * rank
    if len(raw) < offset:
        raise FormatError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{rank}Q", raw, 8) if rank else ()
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    if len(raw) != offset + count * dtype.itemsize:
        raise FormatError(
            f"{path}: payload size mismatch for shape {tuple(shape)}"
        )
    return np.frombuffer(raw, dtype=dtype, offset=offset).reshape(shape).copy()


def write_mask_png(path, mask) -> None:
    """Store a binary mask as 8-bit single-channel PNG, foreground = 255."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise DataError(f"mask must be 2-D, got shape {arr.shape}")
    uniq = np.unique(arr)
    if not np.isin(uniq, (0, 1)).all():
        raise DataError("mask values must be strictly binary")
    Image.fromarray((arr.astype(np.uint8) * 255)).save(path)


def read_mask_png(path) -> np.ndarray:
    """Read a mask PNG; any stored value above 127 maps to foreground."""
    img = Image.open(path)
    if img.mode != "L":
        raise FormatError(
            f"{path}: mask must be 8-bit single-channel PNG, got mode {img.mode}"
        )
    return (np.asarray(img) > MASK_THRESHOLD).astype(np.uint8)


def write_gray_png(path, values) -> None:
    """Store a [0, 1] probability map as an 8-bit grayscale PNG."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"probability map must be 2-D, got shape {arr.shape}")
    Image.fromarray(np.clip(np.rint(arr * 255), 0, 255).astype(np.uint8)).save(path)


def read_gray_png(path) -> np.ndarray:
    """Read an 8-bit grayscale PNG back to probabilities in [0, 1]."""
    img = Image.open(path)
    if img.mode != "L":
        raise FormatError(f"{path}: expected 8-bit grayscale PNG, got {img.mode}")
    return np.asarray(img).astype(np.float32) / 255.0


def write_rgb_png(path, image) -> None:
    arr = np.asarray(image, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"frame must be HxWx3, got shape {arr.shape}")
    Image.fromarray(arr, mode="RGB").save(path)


def read_rgb_png(path) -> np.ndarray:
    img = Image.open(path)
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.asarray(img)


# ---------------------------------------------------------------------------
# sequences on disk


@dataclass
class FrameSequence:
    """Ordered video frames with optional ground truth, the unit of
    training and evaluation."""

    name: str
    frames: np.ndarray  # [N, H, W, 3] uint8
    masks: np.ndarray | None = None  # [N, H, W] uint8
    flows: np.ndarray | None = None  # [N or N-1, H, W, 2] float32
    directory: Path | None = None
    meta: dict = field(default_factory=dict)

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def image_size(self):
        return self.frames.shape[1], self.frames.shape[2]


def write_sequence_dir(directory, frames, flows=None, masks=None, meta=None):
    """Write the dataset layout: frames/, flows/ (.flo), masks/ (PNG),
    meta.json."""
    directory = Path(directory)
    (directory / "frames").mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(frames):
        write_rgb_png(directory / "frames" / f"{t:05d}.png", frame)
    if flows is not None:
        (directory / "flows").mkdir(exist_ok=True)
        for t, flo in enumerate(flows):
            write_flo(FlowField.from_array(flo), directory / "flows" / f"{t:05d}.flo")
    if masks is not None:
        (directory / "masks").mkdir(exist_ok=True)
        for t, mask in enumerate(masks):
            write_mask_png(directory / "masks" / f"{t:05d}.png", mask)
    if meta is not None:
        write_json(directory / "meta.json", meta)


def load_sequence_dir(directory) -> FrameSequence:
    directory = Path(directory)
    frame_files = sorted((directory / "frames").glob("*.png"))
    if not frame_files:
        raise DataError(f"{directory}: no frames found")
    frames = np.stack([read_rgb_png(f) for f in frame_files])
    masks = None
    mask_dir = directory / "masks"
    if mask_dir.is_dir():
        masks = np.stack([read_mask_png(f) for f in sorted(mask_dir.glob("*.png"))])
        if masks.shape[0] != frames.shape[0]:
            raise DataError(f"{directory}: {masks.shape[0]} masks for {frames.shape[0]} frames")
    flows = None
    flow_dir = directory / "flows"
    if flow_dir.is_dir():
        flo = [read_flo(f) for f in sorted(flow_dir.glob("*.flo"))]
        if flo:
            flows = np.stack([f.vectors for f in flo])
    meta = {}
    meta_path = directory / "meta.json"
    if meta_path.is_file():
        meta = read_json(meta_path)
    return FrameSequence(
        name=directory.name, frames=frames, masks=masks, flows=flows,
        directory=directory, meta=meta,
    )


def write_json(path, obj) -> None:
    # insertion order is kept: checkpoint manifests rely on it
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------------------
# checkpoints: a directory holding a JSON manifest plus one GMT1 file per
# parameter, so saved state is human-inspectable and diff-friendly.

CHECKPOINT_FORMAT = "geomotion-checkpoint"


def _param_filename(idx, name):
    safe = name.replace("/", "_")
    return f"params/{idx:04d}_{safe}.gmt1"


def save_checkpoint(directory, params_state, meta=None, optimizer_state=None):
    """params_state / optimizer_state: ordered name -> float32 ndarray."""
    directory = Path(directory)
    (directory / "params").mkdir(parents=True, exist_ok=True)
    manifest = {"format": CHECKPOINT_FORMAT, "version": 1, "params": {}, "meta": meta or {}}
    for idx, (name, arr) in enumerate(params_state.items()):
        rel = _param_filename(idx, name)
        write_tensor(directory / rel, np.asarray(arr, dtype=np.float32))
        manifest["params"][name] = rel
    if optimizer_state:
        (directory / "optim").mkdir(exist_ok=True)
        manifest["optimizer"] = {}
        for idx, (name, arr) in enumerate(optimizer_state.items()):
            rel = f"optim/{idx:04d}_{name.replace('/', '_')}.gmt1"
            write_tensor(directory / rel, np.asarray(arr, dtype=np.float32))
            manifest["optimizer"][name] = rel
    write_json(directory / "manifest.json", manifest)
    return directory


def load_checkpoint(directory):
    """Returns (params_state, meta, optimizer_state); arrays reload bitwise."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise FormatError(f"{directory}: missing checkpoint manifest")
    manifest = read_json(manifest_path)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{directory}: not a {CHECKPOINT_FORMAT} directory")
    params = {name: read_tensor(directory / rel) for name, rel in manifest["params"].items()}
    optim = {
        name: read_tensor(directory / rel)
        for name, rel in manifest.get("optimizer", {}).items()
    }
    return params, manifest.get("meta", {}), optim
