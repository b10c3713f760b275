import filecmp
import json

import numpy as np
import pytest

from geomotion_export import formats
from geomotion_export.cli import main as export_main
from geomotion_export.export import ExportJob, ShapeContractViolation, photometric_error, run_export
from geomotion_export.models import BlockMatchFlow, MockBackbone, ModelLoadError

TOY = dict(image_size=64, patch_size=8, channels=8, d_cam=8)


class TestFormatsMatchConsumer:
    """Golden-byte compatibility with the consumer's own writers."""

    def test_flo_bytes_identical(self, tmp_path):
        from geomotion import dataio

        rng = np.random.default_rng(1)
        vec = rng.normal(size=(6, 5, 2)).astype(np.float32)
        formats.write_flo(tmp_path / "ours.flo", vec)
        dataio.write_flo(dataio.FlowField.from_array(vec), tmp_path / "theirs.flo")
        assert (tmp_path / "ours.flo").read_bytes() == (tmp_path / "theirs.flo").read_bytes()
        back = dataio.read_flo(tmp_path / "ours.flo")
        assert np.array_equal(back.vectors, vec)

    def test_gmt1_bytes_identical(self, tmp_path):
        from geomotion import dataio

        rng = np.random.default_rng(2)
        arr = rng.normal(size=(2, 3, 4)).astype(np.float32)
        formats.write_gmt1(tmp_path / "ours.gmt1", arr)
        dataio.write_tensor(tmp_path / "theirs.gmt1", arr)
        assert (tmp_path / "ours.gmt1").read_bytes() == (tmp_path / "theirs.gmt1").read_bytes()
        assert np.array_equal(dataio.read_tensor(tmp_path / "ours.gmt1"), arr)


class TestMockExport:
    def test_layout_and_shapes(self, moving_clip, tmp_path):
        frames_dir, _ = moving_clip
        job = ExportJob(frames_dir=str(frames_dir),
                        output_dir=str(tmp_path / "ds" / "clip"), **TOY)
        out = run_export(job)
        meta = json.loads((out / "meta.json").read_text())
        assert meta["grid"] == [8, 8]
        assert len(list((out / "flows").glob("*.flo"))) == 1  # N - 1
        from geomotion import dataio

        assert dataio.read_tensor(out / "geo_low.gmt1").shape == (2, 64, 16)
        assert dataio.read_tensor(out / "geo_high.gmt1").shape == (2, 64, 16)
        assert dataio.read_tensor(out / "cam.gmt1").shape == (2, 64, 8)

    def test_loads_through_file_provider(self, moving_clip, tmp_path):
        from geomotion.dataio import FrameSequence
        from geomotion.providers import ProviderSpec, provide

        frames_dir, frames = moving_clip
        run_export(ExportJob(frames_dir=str(frames_dir),
                             output_dir=str(tmp_path / "ds" / "clip"), **TOY))
        seq = FrameSequence(name="clip", frames=frames)
        bundle = provide(seq, ProviderSpec(kind="file", dataset_dir=str(tmp_path / "ds")),
                         (8, 8), 8, 8)
        assert bundle.geo_low.shape == (2, 64, 16)
        assert np.isfinite(bundle.geo_low).all()

    def test_exported_flow_beats_zero_flow_baseline(self, moving_clip, tmp_path):
        from geomotion import dataio

        frames_dir, frames = moving_clip
        out = run_export(ExportJob(frames_dir=str(frames_dir),
                                   output_dir=str(tmp_path / "ds" / "clip"), **TOY))
        flow = dataio.read_flo(out / "flows" / "00000.flo").vectors[None]
        err_flow = photometric_error(frames, flow)
        err_zero = photometric_error(frames, np.zeros_like(flow))
        assert err_flow < err_zero

    def test_deterministic(self, moving_clip, tmp_path):
        frames_dir, _ = moving_clip
        for name in ("a", "b"):
            run_export(ExportJob(frames_dir=str(frames_dir),
                                 output_dir=str(tmp_path / name), **TOY))
        match, mismatch, errors = filecmp.cmpfiles(
            tmp_path / "a", tmp_path / "b",
            ["geo_low.gmt1", "geo_high.gmt1", "cam.gmt1", "flows/00000.flo",
             "meta.json"],
            shallow=False,
        )
        assert not mismatch and not errors

    def test_paper_scale_shapes_without_heavy_compute(self):
        # 518x518, patch 14 -> hw = 1369; the geometry streams carry 2C
        job = ExportJob(frames_dir=".", output_dir=".")
        job.validate()
        assert job.image_size // job.patch_size == 37
        backbone = MockBackbone(channels=1024, d_cam=512, patch_size=14)
        frames = np.zeros((2, 518, 518, 3), dtype=np.uint8)
        geo_low, geo_high, cam, grid = backbone.extract(frames)
        assert geo_low.shape == (2, 1369, 2048)
        assert geo_high.shape == (2, 1369, 2048)
        assert cam.shape == (2, 1369, 512)
        assert grid == (37, 37)

    def test_shape_violation_refuses_partial_write(self, moving_clip, tmp_path, monkeypatch):
        frames_dir, _ = moving_clip
        original = MockBackbone.extract

        def bad_extract(self, frames):
            geo_low, geo_high, cam, grid = original(self, frames)
            return geo_low[:, :-1], geo_high, cam, grid

        monkeypatch.setattr(MockBackbone, "extract", bad_extract)
        out_dir = tmp_path / "ds" / "clip"
        with pytest.raises(ShapeContractViolation):
            run_export(ExportJob(frames_dir=str(frames_dir),
                                 output_dir=str(out_dir), **TOY))
        assert not out_dir.exists()

    def test_single_frame_clip_rejected(self, tmp_path):
        from PIL import Image

        clip = tmp_path / "one"
        clip.mkdir()
        Image.new("RGB", (64, 64)).save(clip / "0.png")
        with pytest.raises(ValueError, match="at least 2"):
            run_export(ExportJob(frames_dir=str(clip), output_dir=str(tmp_path / "o"),
                                 **TOY))


class TestBlockMatchFlow:
    def test_recovers_integer_translation(self):
        rng = np.random.default_rng(3)
        canvas = rng.integers(0, 256, size=(72, 72, 3), dtype=np.uint8)
        a = canvas[4:68, 4:68]
        b = canvas[2:66, 4:68]  # content moves down by 2
        flow = BlockMatchFlow(radius=4).estimate(np.stack([a, b]))
        interior = flow[0, 16:48, 16:48]
        assert np.median(interior[..., 1]) == 2.0
        assert np.median(interior[..., 0]) == 0.0


class TestCli:
    def test_end_to_end(self, moving_clip, tmp_path, capsys):
        frames_dir, _ = moving_clip
        code = export_main([
            "--frames", str(frames_dir), "--out", str(tmp_path / "ds" / "clip"),
            "--image-size", "64", "--patch-size", "8", "--channels", "8",
            "--d-cam", "8",
        ])
        assert code == 0
        assert (tmp_path / "ds" / "clip" / "meta.json").is_file()

    def test_unknown_backbone_fails_cleanly(self, moving_clip, tmp_path, capsys):
        frames_dir, _ = moving_clip
        code = export_main([
            "--frames", str(frames_dir), "--out", str(tmp_path / "x"),
            "--backbone", "nonsense",
        ])
        assert code == 1
        assert "export failed" in capsys.readouterr().err


class TestRealWeights:
    """Exercised only when externally obtained model weights are available;
    skipped (not failed) otherwise."""

    def test_raft_small_flow(self, moving_clip, tmp_path):
        pytest.importorskip("torchvision")
        from geomotion_export.models import TorchvisionRaftFlow

        try:
            model = TorchvisionRaftFlow("small")
        except ModelLoadError as exc:
            pytest.skip(f"RAFT weights unavailable: {exc}")
        frames_dir, frames = moving_clip
        out = run_export(ExportJob(frames_dir=str(frames_dir),
                                   output_dir=str(tmp_path / "ds" / "clip"),
                                   flow="torchvision-raft-small", **TOY))
        from geomotion import dataio

        flow = dataio.read_flo(out / "flows" / "00000.flo").vectors[None]
        assert photometric_error(frames, flow) < photometric_error(
            frames, np.zeros_like(flow)
        )
