"""End-to-end motion segmenter: provider bundle + flows in, per-pixel
motion probabilities out. Owns the trainable parameter store and
checkpointing."""

from dataclasses import dataclass, asdict

import numpy as np

from . import dataio, decoder, flowenc, fusion, providers
from .autodiff import ParamStore
from .errors import ConfigError
from .fusion import AblationToggles


@dataclass
class ModelConfig:
    image_size: int = 64
    patch_size: int = 8
    channels: int = 8  # C; geometry streams carry 2C each, decoder width 2C
    d_flow: int = 4
    d_cam: int = 8
    num_heads: int = 4
    num_layers: int = 5
    ffn_expansion: int = 4
    max_frames: int = 64
    use_positional: bool = True

    @property
    def grid(self):
        if self.image_size % self.patch_size:
            raise ConfigError(
                f"patch size {self.patch_size} does not divide image {self.image_size}"
            )
        g = self.image_size // self.patch_size
        return (g, g)

    @property
    def width(self):
        return 2 * self.channels

    def decoder_config(self):
        return decoder.DecoderConfig(
            width=self.width,
            patch_size=self.patch_size,
            num_layers=self.num_layers,
            num_heads=self.num_heads,
            ffn_expansion=self.ffn_expansion,
            max_frames=self.max_frames,
            use_positional=self.use_positional,
        )

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


class MotionSegmenter:
    """Flow CNN + fusion MLP + attention decoder behind one parameter store."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        cfg.grid  # validates patch/image compatibility up front
        self.params = ParamStore()
        rng = np.random.default_rng([int(seed), 0x3D])
        flowenc.init_flow_encoder(self.params, cfg.d_flow, rng)
        fusion.init_fusion(self.params, cfg.channels, cfg.d_flow, cfg.d_cam, rng)
        decoder.init_decoder(self.params, cfg.decoder_config(), rng)

    def forward(self, bundle, flows, toggles=None, frame_indices=None):
        """Differentiable pass: returns (mask probabilities [N, H, W] as a
        Tensor, per-patch logits)."""
        cfg = self.cfg
        flow_tokens = flowenc.encode_flow(flows, self.params, cfg.grid, cfg.d_flow)
        fused = fusion.aggregate(bundle, flow_tokens, self.params,
                                 toggles=toggles or AblationToggles())
        logits = decoder.decode(fused, self.params, cfg.decoder_config(), cfg.grid,
                                frame_indices=frame_indices)
        masks = decoder.to_mask(logits, cfg.grid, (cfg.image_size, cfg.image_size))
        return masks, logits

    def prepare_inputs(self, seq, provider_spec):
        """Resolve provider tokens and per-frame flows for a sequence."""
        cfg = self.cfg
        bundle = providers.provide(seq, provider_spec, cfg.grid, cfg.channels, cfg.d_cam)
        flows = seq.flows
        if flows is None:
            raise ConfigError(f"sequence {getattr(seq, 'name', '?')} has no flows")
        if flows.shape[0] == seq.num_frames - 1:
            flows = flowenc.last_frame_flow(flows)
        return bundle, flows

    def predict_prepared(self, bundle, flows, toggles=None, frame_indices=None):
        masks, _ = self.forward(bundle, flows, toggles=toggles,
                                frame_indices=frame_indices)
        return masks.data

    def predict(self, seq, provider_spec, toggles=None):
        """Inference: [N, H, W] motion probabilities as a plain array."""
        bundle, flows = self.prepare_inputs(seq, provider_spec)
        return self.predict_prepared(bundle, flows, toggles=toggles)

    def save(self, directory, meta=None, optimizer_state=None):
        full_meta = {"model_config": self.cfg.to_dict()}
        if meta:
            full_meta.update(meta)
        return dataio.save_checkpoint(
            directory, self.params.state_dict(), meta=full_meta,
            optimizer_state=optimizer_state,
        )

    @classmethod
    def load(cls, directory):
        state, meta, optim = dataio.load_checkpoint(directory)
        cfg = ModelConfig.from_dict(meta.get("model_config", {}))
        model = cls(cfg, seed=0)
        model.params.load_state_dict(state, strict=True)
        model._loaded_meta = meta
        model._loaded_optimizer = optim
        return model
