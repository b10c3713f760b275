"""Desk-scale experiment builders: the toy learnability setup, the ablation
sweep, and the decoder-initialization comparison.

The toy suite uses 64x64 scenes, patch 8, C=8, a synthetic provider with
noise 0.25, and 8 training plus 8 held-out sequences. Camera translation
varies per sequence so the camera stream carries real information and flow
alone stays ambiguous.
"""

from dataclasses import replace

import numpy as np

from .fusion import AblationToggles
from .model import ModelConfig
from .providers import ProviderSpec
from .synth import SceneConfig, generate_sequence
from .trainer import TrainConfig, train

# held-out sequences use camera vectors unseen in training but with every
# component inside the training range: rules that compare flow to the camera
# per component generalize, memorizing the eight training vectors does not
TOY_CAMERAS = [(1, 0), (0, 1), (-1, 0), (0, -1), (2, 2), (-2, -2), (2, -2), (-2, 2)]
HOLDOUT_CAMERAS = [(1, 1), (-1, -1), (1, -1), (-1, 1), (2, 0), (0, 2), (-2, 0), (0, -2)]
TOY_NOISE = 0.25
TOY_LR = 3e-3
TOY_TARGET_JM = 0.7
TOY_MAX_STEPS = 500
EVAL_SEED_BASE = 10_000


def toy_model_config() -> ModelConfig:
    # d_flow 8 gives the flow encoder a full signed-identity basis
    return ModelConfig(image_size=64, patch_size=8, channels=8, d_flow=8,
                       d_cam=8, num_heads=4)


def toy_provider_spec(noise=TOY_NOISE) -> ProviderSpec:
    # depth cue off: object presence must come through the shallow stream
    return ProviderSpec(kind="synthetic", noise_amplitude=noise,
                        depth_cue_weight=0.0)


def toy_scene(index, holdout=False) -> SceneConfig:
    """Two movers plus two camera-locked props. Props belong to the
    ground-truth background, so object presence alone cannot solve the task;
    texture brightness is class conditional with overlap, so appearance is
    informative but insufficient; camera translation varies per sequence
    (and differs between training and held-out scenes), so interpreting
    flow requires the camera stream or a learned background-majority rule."""
    cameras = HOLDOUT_CAMERAS if holdout else TOY_CAMERAS
    cam = cameras[index % len(cameras)]
    return SceneConfig(
        camera_translation=cam, num_frames=16, velocity_range=(-2.0, 2.0),
        num_objects=2, num_static_objects=2,
        size_range=(22, 28), static_size_range=(16, 22),
        mover_value_range=(150.0, 235.0), prop_value_range=(25.0, 110.0),
        background_value_range=(60.0, 200.0),
    )


def toy_sequences(count=8, holdout=False):
    """The fixed toy suite: 8 training and 8 held-out scenes with disjoint
    generator seeds and the same camera rotation. Experiment seeds vary the
    model and data order, never the scenes."""
    base = EVAL_SEED_BASE if holdout else 0
    prefix = "eval" if holdout else "train"
    seqs = []
    for i in range(count):
        seq = generate_sequence(toy_scene(i, holdout=holdout), base + i)
        seq.name = f"{prefix}_{i:03d}"
        seqs.append(seq)
    return seqs


def toy_train_config(seed=0, **overrides) -> TrainConfig:
    cfg = TrainConfig(
        model=toy_model_config(), learning_rate=TOY_LR, epochs=100,
        frames_per_batch=8, seed=seed, max_steps=TOY_MAX_STEPS,
        eval_every=25, target_j_m=TOY_TARGET_JM,
    )
    return replace(cfg, **overrides) if overrides else cfg


def run_learnability(seed=0, **overrides):
    """Train on the toy suite until held-out J_M reaches the target (or the
    step cap). Returns the TrainReport."""
    train_seqs = toy_sequences(holdout=False)
    eval_seqs = toy_sequences(holdout=True)
    cfg = toy_train_config(seed, **overrides)
    return train(cfg, train_seqs, eval_seqs, toy_provider_spec())


ABLATION_CONFIGS = {
    "all": AblationToggles(),
    "no_cam": AblationToggles(cam=False),
    "no_flow": AblationToggles(flow=False),
    "no_shallow": AblationToggles(shallow=False),
}


def run_init_experiment(checkpoint_path, seeds=(0, 1, 2), max_steps=200,
                        eval_every=10):
    """Paired random-vs-checkpoint initialization runs on the fixed toy
    suite. Returns per-seed steps-to-target for both arms; None means the
    arm never reached the target within the budget."""
    from .trainer import init_experiment, steps_to_reach

    train_seqs = toy_sequences(holdout=False)
    eval_seqs = toy_sequences(holdout=True)
    outcomes = {"random": [], "initialized": []}
    for seed in seeds:
        cfg = toy_train_config(seed, max_steps=max_steps, eval_every=eval_every,
                               target_j_m=TOY_TARGET_JM)
        rand_rep, init_rep = init_experiment(cfg, checkpoint_path,
                                             train_seqs, eval_seqs,
                                             toy_provider_spec())
        outcomes["random"].append(steps_to_reach(rand_rep, TOY_TARGET_JM))
        outcomes["initialized"].append(steps_to_reach(init_rep, TOY_TARGET_JM))
    return outcomes


def run_ablation(seeds=(0, 1, 2), steps=300, eval_every=25, tail=4):
    """Fixed-budget training for each toggle configuration on the fixed toy
    suite, varying only the training seed (paired comparison). The per-run
    score averages the last `tail` held-out evaluations, which damps the
    step-to-step optimizer bounce. Returns
    {config: {"scores": [score per seed], "median": float}}."""
    train_seqs = toy_sequences(holdout=False)
    eval_seqs = toy_sequences(holdout=True)
    results = {name: [] for name in ABLATION_CONFIGS}
    for seed in seeds:
        for name, toggles in ABLATION_CONFIGS.items():
            cfg = toy_train_config(seed, max_steps=steps, eval_every=eval_every,
                                   target_j_m=None, toggles=toggles)
            report = train(cfg, train_seqs, eval_seqs, toy_provider_spec())
            window = [j for _, j in report.eval_history[-tail:]]
            results[name].append(float(np.mean(window)))
    return {
        name: {"scores": scores, "median": float(np.median(scores))}
        for name, scores in results.items()
    }
