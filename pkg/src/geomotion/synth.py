"""Deterministic synthetic dynamic scenes: rigid 2-D shapes translating over
a background that drifts with the simulated camera, plus exact ground-truth
flow, motion masks, and per-frame camera translation.

Textures are seeded low-frequency noise quantized to 8 bits so motion is
recoverable from appearance. Later-drawn objects win under occlusion.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError

MOTION_EPS = 1e-6  # flow farther than this from the camera translation is "moving"


@dataclass
class SceneConfig:
    height: int = 64
    width: int = 64
    num_frames: int = 8
    num_objects: int = 2
    num_static_objects: int = 0  # props translating with the camera
    shape_family: str = "rectangle"  # rectangle | disk | mixed
    velocity_range: tuple = (-3.0, 3.0)  # per component, px/frame
    camera_translation: tuple = (1.0, 0.0)  # (vx, vy) px/frame
    texture_seed: int = 0
    allow_occlusion: bool = True
    size_range: tuple = (24, 32)  # moving-object extent in px
    static_size_range: tuple = (12, 18)  # prop extent in px
    integer_velocities: bool = True
    flat_textures: bool = False
    texture_scale: int = 4  # noise correlation length in px
    # texture value ranges per surface class; overlapping ranges make
    # appearance an informative but insufficient cue
    mover_value_range: tuple = (40.0, 215.0)
    prop_value_range: tuple = (40.0, 215.0)
    background_value_range: tuple = (40.0, 215.0)
    # explicit overrides; drawn from the ranges above when None
    object_velocities: list | None = None
    object_sizes: list | None = None
    object_positions: list | None = None

    def validate(self):
        if self.num_frames < 2:
            raise ConfigError("num_frames must be >= 2")
        if self.shape_family not in ("rectangle", "disk", "mixed"):
            raise ConfigError(f"unknown shape family: {self.shape_family}")
        if self.size_range[0] > self.size_range[1]:
            raise ConfigError("invalid size_range")
        sizes = list(self.object_sizes or [])
        if not sizes:
            sizes = ([self.size_range[1]] * self.num_objects
                     + [self.static_size_range[1]] * self.num_static_objects)
        for s in sizes:
            if s >= self.height or s >= self.width:
                raise ConfigError(
                    f"object extent {s} does not fit a {self.height}x{self.width} frame"
                )

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("velocity_range", "camera_translation", "size_range",
                    "static_size_range", "mover_value_range",
                    "prop_value_range", "background_value_range"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class SceneObject:
    shape: str  # rectangle | disk
    size: tuple  # (h, w) extent
    position: np.ndarray  # (y, x) top-left at frame 0, continuous
    velocity: np.ndarray  # (vy, vx) px/frame
    texture: np.ndarray  # [h, w, 3] float


@dataclass
class SyntheticSequence:
    frames: np.ndarray  # [N, H, W, 3] uint8
    flows: np.ndarray  # [N, H, W, 2] float32, (u, v) = (dx, dy), frame t -> t+1
    masks: np.ndarray  # [N, H, W] uint8
    camera: np.ndarray  # [N, 2] float32 (vx, vy)
    surfaces: np.ndarray  # [N, H, W] int16, -1 background, else object index
    seed: int = 0
    config: SceneConfig | None = None
    name: str = "seq"

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def image_size(self):
        return self.frames.shape[1], self.frames.shape[2]


def _smooth_noise(rng, height, width, scale, value_range=(40.0, 215.0), channels=3):
    """Low-frequency noise: coarse uniform grid bilinearly upsampled."""
    gh = max(2, int(np.ceil(height / scale)) + 1)
    gw = max(2, int(np.ceil(width / scale)) + 1)
    grid = rng.uniform(value_range[0], value_range[1], size=(gh, gw, channels))
    ys = np.linspace(0, gh - 1, height)
    xs = np.linspace(0, gw - 1, width)
    return bilinear_sample(grid, *np.meshgrid(ys, xs, indexing="ij"))


def bilinear_sample(img, ys, xs):
    """Sample img [H, W, ...] at continuous (ys, xs), clamped to the border."""
    h, w = img.shape[:2]
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[..., None] if img.ndim == 3 else ys - y0
    fx = (xs - x0)[..., None] if img.ndim == 3 else xs - x0
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _coverage(obj, pos, height, width):
    """Boolean mask of pixels whose centers the object covers at `pos`."""
    ys, xs = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    oh, ow = obj.size
    ly = ys - pos[0]
    lx = xs - pos[1]
    if obj.shape == "rectangle":
        return (ly >= 0) & (ly < oh) & (lx >= 0) & (lx < ow)
    ry, rx = oh / 2.0, ow / 2.0
    return ((ly - ry + 0.5) / ry) ** 2 + ((lx - rx + 0.5) / rx) ** 2 <= 1.0


def _draw_objects(config, rng_layout, tex_rng):
    """Props (camera-locked) come first in draw order so movers, drawn
    later, are never carved up by them."""
    cam = np.array([config.camera_translation[1], config.camera_translation[0]], dtype=np.float64)
    objects = []
    for i in range(config.num_static_objects + config.num_objects):
        is_static = i < config.num_static_objects
        mover_idx = i - config.num_static_objects
        if config.object_sizes is not None and 0 <= mover_idx < len(config.object_sizes):
            size = config.object_sizes[mover_idx]
        else:
            lo_s, hi_s = config.static_size_range if is_static else config.size_range
            size = int(rng_layout.integers(lo_s, hi_s + 1))
        size = (size, size)
        if config.shape_family == "mixed":
            shape = "rectangle" if rng_layout.integers(2) == 0 else "disk"
        else:
            shape = config.shape_family
        if is_static:
            vel = cam.copy()
        elif config.object_velocities is not None and mover_idx < len(config.object_velocities):
            vel = np.array(
                [config.object_velocities[mover_idx][1],
                 config.object_velocities[mover_idx][0]],
                dtype=np.float64,
            )
        else:
            # resample until the object moves relative to the camera
            for _ in range(100):
                vel = rng_layout.uniform(*config.velocity_range, size=2)
                if config.integer_velocities:
                    vel = np.rint(vel)
                if np.abs(vel - cam).max() > MOTION_EPS:
                    break
        if (config.object_positions is not None
                and 0 <= mover_idx < len(config.object_positions)):
            pos = np.array(
                [config.object_positions[mover_idx][1],
                 config.object_positions[mover_idx][0]],
                dtype=np.float64,
            )
        else:
            travel = vel * (config.num_frames - 1)
            lo = np.maximum(0, -travel)
            hi = np.array([config.height - size[0], config.width - size[1]]) - np.maximum(0, travel)
            hi = np.maximum(lo + 1, hi)
            pos = np.floor(rng_layout.uniform(lo, hi))
        value_range = (config.prop_value_range if is_static
                       else config.mover_value_range)
        if config.flat_textures:
            texture = np.full((*size, 3), tex_rng.uniform(*value_range, 3))
        else:
            texture = _smooth_noise(tex_rng, size[0], size[1],
                                    config.texture_scale, value_range)
        objects.append(SceneObject(shape, size, pos, vel, texture))
    return objects


def generate_sequence(config: SceneConfig, seed: int) -> SyntheticSequence:
    """Deterministic in (config, seed). Objects keep one velocity for the
    whole sequence; ground-truth flow is the object velocity on object
    pixels and the camera translation elsewhere."""
    config.validate()
    rng_layout = np.random.default_rng([seed, 0xA5])
    tex_rng = np.random.default_rng([config.texture_seed, seed, 0x5C])
    h, w, n = config.height, config.width, config.num_frames
    cam = np.array([config.camera_translation[1], config.camera_translation[0]], dtype=np.float64)

    objects = _draw_objects(config, rng_layout, tex_rng)

    if not config.allow_occlusion:
        for _ in range(100):
            overlap = _any_overlap(objects, n, h, w)
            if not overlap:
                break
            objects = _draw_objects(config, rng_layout, tex_rng)
        else:
            raise ConfigError("could not place objects without occlusion")

    # background canvas large enough for every camera crop
    span_y = cam[0] * (n - 1)
    span_x = cam[1] * (n - 1)
    oy0 = max(0.0, span_y)
    ox0 = max(0.0, span_x)
    ch = int(np.ceil(h + abs(span_y))) + 2
    cw = int(np.ceil(w + abs(span_x))) + 2
    if config.flat_textures:
        canvas = np.full((ch, cw, 3), tex_rng.uniform(*config.background_value_range, 3))
    else:
        canvas = _smooth_noise(tex_rng, ch, cw, config.texture_scale,
                               config.background_value_range)

    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    frames = np.empty((n, h, w, 3), dtype=np.uint8)
    flows = np.empty((n, h, w, 2), dtype=np.float32)
    masks = np.empty((n, h, w), dtype=np.uint8)
    surfaces = np.empty((n, h, w), dtype=np.int16)

    for t in range(n):
        img = bilinear_sample(canvas, ys - cam[0] * t + oy0, xs - cam[1] * t + ox0)
        flow = np.empty((h, w, 2), dtype=np.float64)
        flow[..., 0] = cam[1]
        flow[..., 1] = cam[0]
        surface = np.full((h, w), -1, dtype=np.int16)
        for i, obj in enumerate(objects):
            pos = obj.position + obj.velocity * t
            cover = _coverage(obj, pos, h, w)
            if not cover.any():
                continue
            color = bilinear_sample(obj.texture, ys[cover] - pos[0], xs[cover] - pos[1])
            img[cover] = color
            flow[cover, 0] = obj.velocity[1]
            flow[cover, 1] = obj.velocity[0]
            surface[cover] = i
        frames[t] = np.clip(np.rint(img), 0, 255).astype(np.uint8)
        flows[t] = flow.astype(np.float32)
        surfaces[t] = surface
        diff = np.abs(flow - np.array([cam[1], cam[0]]))
        masks[t] = (diff.max(axis=-1) > MOTION_EPS).astype(np.uint8)

    camera = np.tile(np.array([cam[1], cam[0]], dtype=np.float32), (n, 1))
    return SyntheticSequence(
        frames=frames, flows=flows, masks=masks, camera=camera,
        surfaces=surfaces, seed=seed, config=config,
    )


def _any_overlap(objects, n, h, w):
    for t in range(n):
        covered = np.zeros((h, w), dtype=bool)
        for obj in objects:
            cover = _coverage(obj, obj.position + obj.velocity * t, h, w)
            if (covered & cover).any():
                return True
            covered |= cover
    return False


def warp_consistency(seq: SyntheticSequence) -> float:
    """Mean absolute color error (fraction of dynamic range) after warping
    frame t+1 back onto frame t with the ground-truth flow. Pixels whose
    bilinear support in t+1 crosses a surface change, and pixels that leave
    the frame, are excluded as occluded."""
    h, w = seq.image_size
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    total_err = 0.0
    total_px = 0
    for t in range(seq.num_frames - 1):
        ty = ys + seq.flows[t, ..., 1]
        tx = xs + seq.flows[t, ..., 0]
        inside = (ty >= 0) & (ty <= h - 1) & (tx >= 0) & (tx <= w - 1)
        y0 = np.clip(np.floor(ty), 0, h - 1).astype(np.intp)
        x0 = np.clip(np.floor(tx), 0, w - 1).astype(np.intp)
        y1 = np.minimum(y0 + 1, h - 1)
        x1 = np.minimum(x0 + 1, w - 1)
        surf_next = seq.surfaces[t + 1]
        same = (
            (surf_next[y0, x0] == seq.surfaces[t])
            & (surf_next[y0, x1] == seq.surfaces[t])
            & (surf_next[y1, x0] == seq.surfaces[t])
            & (surf_next[y1, x1] == seq.surfaces[t])
        )
        valid = inside & same
        if not valid.any():
            continue
        warped = bilinear_sample(seq.frames[t + 1].astype(np.float64), ty, tx)
        err = np.abs(warped - seq.frames[t].astype(np.float64)).mean(axis=-1)
        total_err += err[valid].sum()
        total_px += int(valid.sum())
    if total_px == 0:
        return 0.0
    return float(total_err / total_px / 255.0)


def sequence_meta(seq: SyntheticSequence) -> dict:
    return {
        "seed": seq.seed,
        "camera": seq.camera.tolist(),
        "config": seq.config.to_dict() if seq.config else None,
    }
