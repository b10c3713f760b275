"""Adam training loop: per-sequence frame batches with dynamically adjusted
sampling stride, per-epoch reshuffling, gradient clipping, checkpointing
with bitwise-exact resume, and the paired initialization experiment.
"""

import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import dataio, metrics
from .autodiff import ParamStore
from .errors import ConfigError, DivergenceError
from .fusion import AblationToggles
from .losses import LossConfig, total_loss
from .model import ModelConfig, MotionSegmenter
from .providers import ProviderSpec


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    learning_rate: float = 5e-5
    epochs: int = 15
    frames_per_batch: int = 16
    seed: int = 0
    grad_clip: float = 1.0  # global-norm guard; 0 disables (strict-paper mode)
    deterministic: bool = True
    max_steps: int | None = None
    eval_every: int = 25
    target_j_m: float | None = None  # stop once held-out J_M reaches this
    resample_each_epoch: bool = True
    toggles: AblationToggles = field(default_factory=AblationToggles)
    init_mode: str = "random"  # random | checkpoint
    init_checkpoint: str | None = None
    loss: LossConfig = field(default_factory=LossConfig)
    checkpoint_dir: str | None = None

    def validate(self):
        if self.frames_per_batch < 2:
            raise ConfigError("frames_per_batch must be >= 2")
        if self.learning_rate < 0:
            raise ConfigError("learning rate must be >= 0")
        if self.init_mode not in ("random", "checkpoint"):
            raise ConfigError(f"unknown init mode: {self.init_mode}")
        if self.init_mode == "checkpoint" and not self.init_checkpoint:
            raise ConfigError("init_mode=checkpoint needs init_checkpoint")


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    step_seconds: list = field(default_factory=list)
    eval_history: list = field(default_factory=list)  # (step, held-out J_M)
    steps_run: int = 0
    steps_to_target: int | None = None
    final_checkpoint: str | None = None
    final_eval: dict | None = None
    seed: int = 0

    def write_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss", "seconds"])
            for i, (loss, sec) in enumerate(zip(self.losses, self.step_seconds)):
                writer.writerow([i + 1, f"{loss:.8f}", f"{sec:.6f}"])

    def to_dict(self):
        return asdict(self)


class Adam:
    """Reference Adam update: beta1=0.9, beta2=0.999, eps=1e-8, with bias
    correction. State round-trips through checkpoints bitwise."""

    def __init__(self, params: ParamStore, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_dict(self):
        state = {}
        for name in self.m:
            state[f"{name}.m"] = self.m[name].copy()
            state[f"{name}.v"] = self.v[name].copy()
        return state

    def load_state_dict(self, state, t):
        for name in self.m:
            self.m[name] = state[f"{name}.m"].astype(self.m[name].dtype)
            self.v[name] = state[f"{name}.v"].astype(self.v[name].dtype)
        self.t = int(t)


def clip_global_norm(params: ParamStore, max_norm):
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for _, p in params.items():
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = np.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = np.float32(max_norm / norm)
        for _, p in params.items():
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


def sample_frames(length, count, phase=0):
    """Frame indices for one batch: stride rounds length/count, indices wrap
    around so short sequences are revisited until the batch is full."""
    if length < 2 or count < 2:
        raise ConfigError("need length >= 2 and count >= 2")
    step = max(1, round(length / count))
    return (int(phase) + np.arange(count) * step) % length


def preprocess_sequence(seq, image_size):
    """Center-crop to the largest square, then resize to the training
    resolution. Flow vectors are rescaled with the spatial factor; masks are
    resampled with nearest neighbor to stay binary."""
    from . import _kernels as K

    h, w = seq.image_size
    side = min(h, w)
    oy, ox = (h - side) // 2, (w - side) // 2
    if side == image_size and (h, w) == (image_size, image_size):
        return seq
    scale = image_size / side

    def crop(arr):
        return arr[:, oy : oy + side, ox : ox + side]

    frames = crop(seq.frames).astype(np.float32).transpose(0, 3, 1, 2)
    frames = K.bilinear_resize_forward(np.ascontiguousarray(frames), image_size, image_size)
    frames = np.clip(np.rint(frames.transpose(0, 2, 3, 1)), 0, 255).astype(np.uint8)

    masks = None
    if seq.masks is not None:
        idx = (np.arange(image_size) + 0.5) / scale - 0.5
        idx = np.clip(np.rint(idx), 0, side - 1).astype(np.intp)
        masks = crop(seq.masks)[:, idx][:, :, idx]

    flows = None
    if seq.flows is not None:
        fl = seq.flows[:, oy : oy + side, ox : ox + side].transpose(0, 3, 1, 2)
        fl = K.bilinear_resize_forward(
            np.ascontiguousarray(fl.astype(np.float32)), image_size, image_size
        )
        flows = (fl * scale).transpose(0, 2, 3, 1)

    out = dataio.FrameSequence(
        name=seq.name, frames=frames, masks=masks, flows=flows,
        meta=dict(getattr(seq, "meta", {})),
    )
    # synthetic sequences carry extra ground truth the providers use
    for attr in ("camera", "seed"):
        if hasattr(seq, attr):
            setattr(out, attr, getattr(seq, attr))
    if getattr(seq, "surfaces", None) is not None:
        idx = (np.arange(image_size) + 0.5) / scale - 0.5
        idx = np.clip(np.rint(idx), 0, side - 1).astype(np.intp)
        out.surfaces = crop(seq.surfaces)[:, idx][:, :, idx]
    return out


def evaluate_holdout(model, eval_seqs, provider_spec, toggles=None):
    """Held-out J_M: per-sequence mean J of binarized predictions, averaged
    over sequences."""
    preds, gts = [], []
    for seq in eval_seqs:
        preds.append(model.predict(seq, provider_spec, toggles=toggles))
        gts.append(seq.masks)
    report = metrics.evaluate_masks(preds, gts)
    return report


def train(cfg: TrainConfig, train_seqs, eval_seqs, provider_spec: ProviderSpec,
          resume_from=None) -> TrainReport:
    """Run the optimization loop.

    Frozen by construction: provider outputs enter the graph as constants,
    so only flow-CNN, fusion, decoder, and head parameters receive updates.
    """
    cfg.validate()
    if not train_seqs:
        raise ConfigError("no training sequences")
    train_seqs = [preprocess_sequence(s, cfg.model.image_size) for s in train_seqs]
    eval_seqs = [preprocess_sequence(s, cfg.model.image_size) for s in eval_seqs]

    model = MotionSegmenter(cfg.model, seed=cfg.seed)
    if cfg.init_mode == "checkpoint":
        state, _, _ = dataio.load_checkpoint(cfg.init_checkpoint)
        load_compatible(model.params, state)
    adam = Adam(model.params, cfg.learning_rate)

    start_step = 0
    if resume_from is not None:
        state, meta, optim = dataio.load_checkpoint(resume_from)
        model.params.load_state_dict(state, strict=True)
        adam.load_state_dict(optim, meta["step"])
        start_step = int(meta["step"])

    bundles = {}  # provider outputs are pure per sequence; cache per run

    def bundle_for(seq):
        if seq.name not in bundles:
            bundles[seq.name] = model.prepare_inputs(seq, provider_spec)
        return bundles[seq.name]

    report = TrainReport(seed=cfg.seed)
    steps_per_epoch = len(train_seqs)
    total_steps = cfg.epochs * steps_per_epoch
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)

    ckpt_root = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None

    def save(step, tag):
        if ckpt_root is None:
            return None
        path = ckpt_root / tag
        model.save(path, meta={"step": step, "seed": cfg.seed,
                               "train_config": _config_snapshot(cfg)},
                   optimizer_state=adam.state_dict())
        return str(path)

    stop = False
    for step in range(start_step, total_steps):
        epoch, pos = divmod(step, steps_per_epoch)
        epoch_rng = np.random.default_rng([cfg.seed, epoch, 0xE7])
        order = epoch_rng.permutation(steps_per_epoch)
        phases = (
            epoch_rng.integers(0, 1 << 30, size=steps_per_epoch)
            if cfg.resample_each_epoch
            else np.zeros(steps_per_epoch, dtype=np.int64)
        )
        seq = train_seqs[order[pos]]
        bundle, flows = bundle_for(seq)

        t0 = time.perf_counter()
        idx = sample_frames(seq.num_frames, cfg.frames_per_batch,
                            phase=phases[order[pos]] % seq.num_frames)
        sub_bundle = _take_bundle(bundle, idx)
        masks, _ = model.forward(sub_bundle, flows[idx], toggles=cfg.toggles,
                                 frame_indices=idx)
        loss = total_loss(masks, seq.masks[idx], cfg.loss)
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            raise DivergenceError(step)
        model.params.zero_grad()
        loss.backward()
        if cfg.grad_clip > 0:
            clip_global_norm(model.params, cfg.grad_clip)
        adam.step()
        report.losses.append(loss_val)
        report.step_seconds.append(time.perf_counter() - t0)
        report.steps_run = step + 1

        done = step + 1
        if eval_seqs and cfg.eval_every and done % cfg.eval_every == 0:
            j_m = evaluate_holdout(model, eval_seqs, provider_spec,
                                   toggles=cfg.toggles).j_m
            report.eval_history.append((done, j_m))
            if cfg.target_j_m is not None and j_m >= cfg.target_j_m:
                report.steps_to_target = done
                stop = True
        if done % steps_per_epoch == 0:
            save(done, f"epoch_{done // steps_per_epoch:03d}")
        if stop:
            break

    report.final_checkpoint = save(report.steps_run, "final")
    if eval_seqs:
        report.final_eval = evaluate_holdout(
            model, eval_seqs, provider_spec, toggles=cfg.toggles
        ).to_dict()
    report._model = model
    return report


def load_compatible(params: ParamStore, state):
    """Initialize from a possibly partial checkpoint: names absent from the
    model are ignored, but a present name with a mismatched shape is an
    error (incompatible checkpoint)."""
    from .errors import GeoMotionError

    loaded = []
    for name, arr in state.items():
        if name not in params:
            continue
        t = params[name]
        if t.data.shape != arr.shape:
            raise GeoMotionError(
                f"incompatible checkpoint: {name} has shape {arr.shape}, "
                f"model expects {t.data.shape}"
            )
        t.data = arr.astype(t.data.dtype).copy()
        loaded.append(name)
    return loaded


def _take_bundle(bundle, idx):
    from .providers import GeometryBundle

    return GeometryBundle(
        geo_low=bundle.geo_low[idx], geo_high=bundle.geo_high[idx],
        cam=bundle.cam[idx], grid=bundle.grid, channels=bundle.channels,
    )


def _config_snapshot(cfg: TrainConfig):
    snap = asdict(cfg)
    return snap


def init_experiment(cfg: TrainConfig, checkpoint_path, train_seqs, eval_seqs,
                    provider_spec) -> tuple:
    """Paired runs over identical data order: random initialization versus
    checkpoint initialization. Returns (random_report, init_report); the
    second is None when no checkpoint is supplied."""
    rand_cfg = _replace(cfg, init_mode="random", init_checkpoint=None)
    random_report = train(rand_cfg, train_seqs, eval_seqs, provider_spec)
    if checkpoint_path is None:
        return random_report, None
    init_cfg = _replace(cfg, init_mode="checkpoint", init_checkpoint=str(checkpoint_path))
    init_report = train(init_cfg, train_seqs, eval_seqs, provider_spec)
    return random_report, init_report


def _replace(cfg: TrainConfig, **kw):
    from dataclasses import replace

    return replace(cfg, **kw)


def steps_to_reach(report: TrainReport, target) -> int | None:
    """First evaluated step at which held-out J_M reached the target."""
    for step, j_m in report.eval_history:
        if j_m >= target:
            return step
    return None
