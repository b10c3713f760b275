import numpy as np

from geomotion.experiments import (
    ABLATION_CONFIGS,
    HOLDOUT_CAMERAS,
    TOY_CAMERAS,
    toy_model_config,
    toy_provider_spec,
    toy_scene,
    toy_sequences,
    toy_train_config,
)


class TestToySuite:
    def test_fixed_suite_is_deterministic(self):
        a = toy_sequences(holdout=False)
        b = toy_sequences(holdout=False)
        assert len(a) == 8
        for x, y in zip(a, b):
            assert np.array_equal(x.frames, y.frames)
            assert np.array_equal(x.masks, y.masks)

    def test_holdout_uses_disjoint_seeds_and_cameras(self):
        train = toy_sequences(holdout=False)
        heldout = toy_sequences(holdout=True)
        train_cams = {tuple(s.camera[0]) for s in train}
        eval_cams = {tuple(s.camera[0]) for s in heldout}
        assert train_cams.isdisjoint(eval_cams)
        assert not any(
            np.array_equal(t.frames, e.frames) for t in train for e in heldout
        )

    def test_cameras_cycle_by_index(self):
        for i in (0, 3, 7):
            assert toy_scene(i).camera_translation == TOY_CAMERAS[i]
            assert toy_scene(i, holdout=True).camera_translation == HOLDOUT_CAMERAS[i]

    def test_spec_matches_acceptance_config(self):
        mc = toy_model_config()
        assert (mc.image_size, mc.patch_size, mc.channels) == (64, 8, 8)
        assert toy_provider_spec().noise_amplitude == 0.25
        cfg = toy_train_config(0)
        assert cfg.max_steps == 500 and cfg.target_j_m == 0.7
        assert set(ABLATION_CONFIGS) == {"all", "no_cam", "no_flow", "no_shallow"}

    def test_ablation_configs_disable_one_modality_each(self):
        assert ABLATION_CONFIGS["all"].cam and ABLATION_CONFIGS["all"].flow
        assert not ABLATION_CONFIGS["no_cam"].cam
        assert not ABLATION_CONFIGS["no_flow"].flow
        assert not ABLATION_CONFIGS["no_shallow"].shallow
