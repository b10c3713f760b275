import filecmp
import json
import os
import stat
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from geomotion import dataio
from geomotion.cli import build_parser, main
from geomotion.config import Config
from geomotion.errors import ConfigError

TINY = [
    "image_size=16", "patch_size=8", "channels=4", "d_flow=2", "d_cam=4",
    "num_heads=2", "num_layers=1", "ffn_expansion=2", "num_frames=4",
    "num_objects=1", "size_min=6", "size_max=8", "count=2",
    "frames_per_batch=4", "learning_rate=0.001", "epochs=2", "eval_every=0",
]


def run_cli(args):
    return main(args)


def tiny_args(extra):
    out = []
    for kv in TINY:
        out += ["--set", kv]
    return out + extra


def compare_trees(a, b):
    cmp = filecmp.dircmp(a, b)
    assert not cmp.left_only and not cmp.right_only and not cmp.diff_files
    match, mismatch, errors = filecmp.cmpfiles(
        a, b, cmp.common_files, shallow=False
    )
    assert not mismatch and not errors
    for sub in cmp.common_dirs:
        compare_trees(Path(a) / sub, Path(b) / sub)


class TestConfig:
    def test_defaults_file_overrides_precedence(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"seed": 5, "epochs": 7}))
        cfg = Config.from_file(cfg_file).apply_overrides(["epochs=9"])
        assert cfg.seed == 5 and cfg.epochs == 9
        assert cfg.learning_rate == 5e-5  # untouched default

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            Config().updated({"nonsense": 1})

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            Config().apply_overrides(["epochs=banana"])

    def test_bool_coercion(self):
        cfg = Config().apply_overrides(["use_cam=false", "use_flow=1"])
        assert cfg.use_cam is False and cfg.use_flow is True

    def test_env_forces_deterministic(self, monkeypatch):
        monkeypatch.setenv("GEOMOTION_DETERMINISTIC", "1")
        cfg = Config().updated({"deterministic": False})
        assert cfg.deterministic is True

    def test_help_lists_every_config_key(self, capsys):
        parser = build_parser()
        with pytest.raises(SystemExit):
            parser.parse_args(["--help"])
        text = capsys.readouterr().out
        for name, _, default in Config.schema():
            assert name in text, f"--help is missing config key {name}"
            assert repr(default) in text, f"--help is missing default for {name}"


class TestGen:
    def test_same_seed_bit_identical_datasets(self, tmp_path):
        for out in ("a", "b"):
            code = run_cli(["gen", "--out", str(tmp_path / out),
                            *tiny_args(["--seed", "3"])])
            assert code == 0
        compare_trees(tmp_path / "a", tmp_path / "b")

    def test_dataset_layout_and_manifest(self, tmp_path):
        run_cli(["gen", "--out", str(tmp_path / "d"), *tiny_args([])])
        seq_dir = tmp_path / "d" / "seq_000"
        assert sorted(p.name for p in (seq_dir / "frames").iterdir())[0] == "00000.png"
        assert len(list((seq_dir / "flows").glob("*.flo"))) == 4
        assert len(list((seq_dir / "masks").glob("*.png"))) == 4
        assert (seq_dir / "meta.json").is_file()
        manifest = dataio.read_json(tmp_path / "d" / "manifest.json")
        assert manifest["command"] == "gen"
        assert manifest["seed"] == 0
        assert "version" in manifest

    def test_export_features_layout(self, tmp_path):
        run_cli(["gen", "--out", str(tmp_path / "d"),
                 *tiny_args(["--set", "export_features=true"])])
        seq_dir = tmp_path / "d" / "seq_000"
        for name in ("geo_low.gmt1", "geo_high.gmt1", "cam.gmt1"):
            assert (seq_dir / name).is_file()


class TestTrainEvalInferBench:
    @pytest.fixture(scope="class")
    def workspace(self, tmp_path_factory):
        root = tmp_path_factory.mktemp("ws")
        assert run_cli(["gen", "--out", str(root / "data"), *tiny_args([])]) == 0
        assert run_cli(["gen", "--out", str(root / "heldout"),
                        *tiny_args(["--seed", "50"])]) == 0
        code = run_cli(["train", "--out", str(root / "run"),
                        "--data", str(root / "data"),
                        "--eval-data", str(root / "heldout"), *tiny_args([])])
        assert code == 0
        return root

    def test_train_artifacts(self, workspace):
        run = workspace / "run"
        assert (run / "loss_curve.csv").is_file()
        assert (run / "report.json").is_file()
        assert (run / "checkpoints" / "final" / "manifest.json").is_file()
        csv_text = (run / "loss_curve.csv").read_text()
        assert csv_text.startswith("step,loss,seconds")

    def test_infer_writes_probability_masks(self, workspace, tmp_path):
        code = run_cli(["infer", "--out", str(tmp_path / "pred"),
                        "--checkpoint", str(workspace / "run" / "checkpoints" / "final"),
                        "--data", str(workspace / "heldout"), *tiny_args([])])
        assert code == 0
        pngs = sorted((tmp_path / "pred" / "seq_000").glob("*.png"))
        assert len(pngs) == 4
        probs = dataio.read_gray_png(pngs[0])
        assert probs.min() >= 0.0 and probs.max() <= 1.0

    def test_eval_scores_inferred_masks(self, workspace, tmp_path):
        run_cli(["infer", "--out", str(tmp_path / "pred"),
                 "--checkpoint", str(workspace / "run" / "checkpoints" / "final"),
                 "--data", str(workspace / "heldout"), *tiny_args([])])
        gt = tmp_path / "gt"
        for seq_dir in (workspace / "heldout").iterdir():
            if seq_dir.is_dir():
                (gt / seq_dir.name).mkdir(parents=True)
                for mask in (seq_dir / "masks").glob("*.png"):
                    (gt / seq_dir.name / mask.name).write_bytes(mask.read_bytes())
        code = run_cli(["eval", "--out", str(tmp_path / "scores"),
                        "--pred", str(tmp_path / "pred"), "--gt", str(gt),
                        *tiny_args([])])
        assert code == 0
        report = dataio.read_json(tmp_path / "scores" / "seg_report.json")
        assert 0.0 <= report["J_M"] <= 1.0
        assert (tmp_path / "scores" / "seg_report.csv").is_file()

    def test_bench_reports_runtime(self, workspace, tmp_path):
        code = run_cli(["bench", "--out", str(tmp_path / "bench"),
                        "--checkpoint", str(workspace / "run" / "checkpoints" / "final"),
                        "--data", str(workspace / "data"),
                        *tiny_args(["--set", "repetitions=2"])])
        assert code == 0
        result = dataio.read_json(tmp_path / "bench" / "bench.json")
        assert result["seconds_per_frame"] > 0
        assert result["repetitions"] == 2

    def test_infer_with_external_refine_command(self, workspace, tmp_path):
        # external hook contract: CMD frames_dir coarse_dir refined_dir
        hook = tmp_path / "hook.py"
        hook.write_text(
            "import sys, shutil, pathlib\n"
            "frames, coarse, out = map(pathlib.Path, sys.argv[1:4])\n"
            "for p in coarse.glob('*.png'):\n"
            "    shutil.copy2(p, out / p.name)\n"
        )
        code = run_cli(["infer", "--out", str(tmp_path / "pred"),
                        "--checkpoint", str(workspace / "run" / "checkpoints" / "final"),
                        "--data", str(workspace / "heldout"),
                        "--refine-cmd", f"{sys.executable} {hook}",
                        *tiny_args([])])
        assert code == 0
        assert len(list((tmp_path / "pred" / "seq_000").glob("*.png"))) == 4


class TestGradcheckCommand:
    def test_all_rows_pass(self, tmp_path, capsys):
        code = run_cli(["gradcheck", "--out", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out
        table = dataio.read_json(tmp_path / "gradcheck.json")
        assert all(row["passed"] for row in table["results"])
        assert all(row["max_rel_error"] < 1e-4 for row in table["results"])


class TestErrors:
    def test_config_error_exit_code(self, tmp_path, capsys):
        code = run_cli(["gen", "--out", str(tmp_path / "x"),
                        "--set", "bogus_key=1"])
        assert code == 2
        err = capsys.readouterr().err
        payload = json.loads(err.strip().splitlines()[-1])
        assert payload["error"] == "config"

    def test_data_error_exit_code(self, tmp_path, capsys):
        code = run_cli(["eval", "--out", str(tmp_path / "x"),
                        "--pred", str(tmp_path / "nope"),
                        "--gt", str(tmp_path / "nope")])
        assert code == 3
        payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert payload["error"] == "data"

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_exit_code(self, tmp_path, capsys):
        code = run_cli(["train", "--out", str(tmp_path / "x"),
                        *tiny_args(["--set", "learning_rate=1e12",
                                    "--set", "grad_clip=0", "--set", "epochs=8"])])
        assert code == 4
        payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert payload["error"] == "divergence"
        assert "step" in payload
