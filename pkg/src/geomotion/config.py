"""Run configuration: one flat key space shared by the CLI and the JSON
config files. Precedence is defaults < file < command-line overrides.
Unknown keys are rejected.
"""

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .fusion import AblationToggles
from .losses import LossConfig
from .model import ModelConfig
from .providers import ProviderSpec
from .synth import SceneConfig
from .trainer import TrainConfig


@dataclass
class Config:
    # model dimensions
    image_size: int = 64
    patch_size: int = 8
    channels: int = 8
    d_flow: int = 4
    d_cam: int = 8
    num_heads: int = 4
    num_layers: int = 5
    ffn_expansion: int = 4
    max_frames: int = 64
    use_positional: bool = True
    # provider
    provider: str = "synthetic"
    dataset_dir: str = ""
    noise_amplitude: float = 0.0
    depth_cue_weight: float = 1.0
    # synthetic scenes
    num_frames: int = 8
    num_objects: int = 2
    shape_family: str = "rectangle"
    velocity_min: float = -3.0
    velocity_max: float = 3.0
    camera_dx: float = 1.0
    camera_dy: float = 0.0
    texture_seed: int = 0
    allow_occlusion: bool = True
    size_min: int = 24
    size_max: int = 32
    count: int = 8
    export_features: bool = False
    # datasets
    train_dir: str = ""
    eval_dir: str = ""
    # optimization
    learning_rate: float = 5e-5
    epochs: int = 15
    frames_per_batch: int = 16
    grad_clip: float = 1.0
    eval_every: int = 25
    max_steps: int = 0  # 0 means no cap
    target_j_m: float = 0.0  # 0 disables early stopping
    resample_each_epoch: bool = True
    use_cam: bool = True
    use_flow: bool = True
    use_shallow: bool = True
    init_mode: str = "random"
    init_checkpoint: str = ""
    lambda_focal: float = 0.5
    lambda_dice: float = 0.5
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    dice_eps: float = 1.0
    # evaluation
    threshold: float = 0.5
    boundary_tolerance: int = 0  # 0 selects the diagonal-based convention
    repetitions: int = 3
    # reproducibility
    seed: int = 0
    deterministic: bool = True

    def __post_init__(self):
        if os.environ.get("GEOMOTION_DETERMINISTIC") == "1":
            self.deterministic = True

    # ------------------------------------------------------------------
    @classmethod
    def schema(cls):
        """(name, type, default) for every config key."""
        return [(f.name, f.type, f.default) for f in dataclasses.fields(cls)]

    @classmethod
    def from_file(cls, path):
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls().updated(raw, source=str(path))

    def updated(self, mapping, source="override"):
        known = {f.name: f.type for f in dataclasses.fields(self)}
        out = dataclasses.replace(self)
        for key, value in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown config key from {source}: {key!r}")
            setattr(out, key, _coerce(key, known[key], value))
        if os.environ.get("GEOMOTION_DETERMINISTIC") == "1":
            out.deterministic = True
        return out

    def apply_overrides(self, pairs):
        """Apply KEY=VALUE strings from the command line."""
        mapping = {}
        for pair in pairs:
            if "=" not in pair:
                raise ConfigError(f"override must look like key=value, got {pair!r}")
            key, value = pair.split("=", 1)
            mapping[key.strip()] = value.strip()
        return self.updated(mapping, source="command line")

    def to_dict(self):
        return dataclasses.asdict(self)

    # ------------------------------------------------------------------
    # views consumed by the library modules

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            image_size=self.image_size, patch_size=self.patch_size,
            channels=self.channels, d_flow=self.d_flow, d_cam=self.d_cam,
            num_heads=self.num_heads, num_layers=self.num_layers,
            ffn_expansion=self.ffn_expansion, max_frames=self.max_frames,
            use_positional=self.use_positional,
        )

    def provider_spec(self) -> ProviderSpec:
        return ProviderSpec(
            kind=self.provider, dataset_dir=self.dataset_dir or None,
            noise_amplitude=self.noise_amplitude,
            depth_cue_weight=self.depth_cue_weight,
        )

    def scene_config(self) -> SceneConfig:
        return SceneConfig(
            height=self.image_size, width=self.image_size,
            num_frames=self.num_frames, num_objects=self.num_objects,
            shape_family=self.shape_family,
            velocity_range=(self.velocity_min, self.velocity_max),
            camera_translation=(self.camera_dx, self.camera_dy),
            texture_seed=self.texture_seed, allow_occlusion=self.allow_occlusion,
            size_range=(self.size_min, self.size_max),
        )

    def toggles(self) -> AblationToggles:
        return AblationToggles(cam=self.use_cam, flow=self.use_flow,
                               shallow=self.use_shallow)

    def loss_config(self) -> LossConfig:
        return LossConfig(
            lambda_focal=self.lambda_focal, lambda_dice=self.lambda_dice,
            alpha=self.focal_alpha, gamma=self.focal_gamma, eps=self.dice_eps,
        )

    def train_config(self, checkpoint_dir=None) -> TrainConfig:
        return TrainConfig(
            model=self.model_config(), learning_rate=self.learning_rate,
            epochs=self.epochs, frames_per_batch=self.frames_per_batch,
            seed=self.seed, grad_clip=self.grad_clip,
            deterministic=self.deterministic,
            max_steps=self.max_steps or None, eval_every=self.eval_every,
            target_j_m=self.target_j_m or None,
            resample_each_epoch=self.resample_each_epoch,
            toggles=self.toggles(), init_mode=self.init_mode,
            init_checkpoint=self.init_checkpoint or None,
            loss=self.loss_config(), checkpoint_dir=checkpoint_dir,
        )


def _coerce(key, ftype, value):
    ftype = str(ftype)
    try:
        if "bool" in ftype:
            if isinstance(value, bool):
                return value
            if str(value).lower() in ("1", "true", "yes", "on"):
                return True
            if str(value).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if "int" in ftype:
            return int(value)
        if "float" in ftype:
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc
