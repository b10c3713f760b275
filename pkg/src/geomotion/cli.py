"""Command-line entry point.

Subcommands: gen (synthetic dataset), train, eval, infer, bench, gradcheck.
Configuration precedence is defaults < --config file < --set overrides;
every artifact directory receives a manifest.json with the config snapshot,
seed, and version, so identical manifests reproduce identical artifacts in
deterministic mode.
"""

import argparse
import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, dataio, metrics, synth
from .config import Config
from .errors import ConfigError, DataError, DivergenceError, FormatError, GeoMotionError
from .model import MotionSegmenter
from .synth import SceneConfig, generate_sequence

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4


def _schema_epilog():
    lines = ["configuration keys (defaults in parentheses):"]
    for name, _, default in Config.schema():
        lines.append(f"  {name} ({default!r})")
    return "\n".join(lines)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="geomotion",
        description="Feed-forward motion segmentation pipeline",
        epilog=_schema_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("gen", help="write a synthetic dataset directory")
    common(p)

    p = sub.add_parser("train", help="train a model, write checkpoint and curves")
    common(p)
    p.add_argument("--data", help="dataset directory to train on; generated "
                                  "on the fly from the config when omitted")
    p.add_argument("--eval-data", help="held-out dataset directory")
    p.add_argument("--resume", help="checkpoint directory to continue from")

    p = sub.add_parser("eval", help="score predictions against ground truth")
    common(p)
    p.add_argument("--pred", required=True, help="prediction mask directory")
    p.add_argument("--gt", required=True, help="ground-truth mask directory")

    p = sub.add_parser("infer", help="predict motion masks for a dataset")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--refine-cmd", help="external refinement command; invoked "
                   "as CMD <frames_dir> <coarse_dir> <refined_dir>")

    p = sub.add_parser("bench", help="measure inference seconds per frame")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of all "
                                         "registered differentiable ops")
    common(p)
    return parser


def load_config(args) -> Config:
    cfg = Config.from_file(args.config) if args.config else Config()
    cfg = cfg.apply_overrides(args.overrides)
    if args.seed is not None:
        cfg = cfg.updated({"seed": args.seed})
    return cfg


def write_manifest(out_dir, command, cfg: Config):
    dataio.write_json(Path(out_dir) / "manifest.json", {
        "command": command,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "version": __version__,
    })


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args, cfg: Config):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = cfg.scene_config()
    for i in range(cfg.count):
        seq_seed = cfg.seed + i
        seq = generate_sequence(scene, seq_seed)
        seq.name = f"seq_{i:03d}"
        seq_dir = out / seq.name
        dataio.write_sequence_dir(
            seq_dir, seq.frames, flows=seq.flows, masks=seq.masks,
            meta=synth.sequence_meta(seq),
        )
        if cfg.export_features:
            from . import providers

            spec = providers.ProviderSpec(
                kind="synthetic", noise_amplitude=cfg.noise_amplitude,
                depth_cue_weight=cfg.depth_cue_weight,
            )
            bundle = providers.provide(seq, spec, cfg.model_config().grid,
                                       cfg.channels, cfg.d_cam)
            providers.export_bundle(bundle, seq_dir)
    write_manifest(out, "gen", cfg)
    print(f"wrote {cfg.count} sequences to {out}")
    return 0


def load_dataset(directory) -> list:
    """Load every sequence subdirectory. Synthetic datasets are regenerated
    from their meta.json (bitwise identical by determinism), which restores
    ground truth the file formats do not carry."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"dataset directory not found: {directory}")
    seqs = []
    for seq_dir in sorted(d for d in directory.iterdir() if d.is_dir()):
        meta_path = seq_dir / "meta.json"
        meta = dataio.read_json(meta_path) if meta_path.is_file() else {}
        if meta.get("config") and meta.get("seed") is not None:
            seq = generate_sequence(SceneConfig.from_dict(meta["config"]), meta["seed"])
            seq.name = seq_dir.name
            seqs.append(seq)
        else:
            seq = dataio.load_sequence_dir(seq_dir)
            if meta.get("camera") is not None:
                seq.camera = np.asarray(meta["camera"], dtype=np.float32)
            seqs.append(seq)
    if not seqs:
        raise DataError(f"{directory}: no sequences")
    return seqs


def _split_train_eval(cfg: Config, args):
    if getattr(args, "data", None):
        train_seqs = load_dataset(args.data)
        eval_seqs = load_dataset(args.eval_data) if args.eval_data else []
        return train_seqs, eval_seqs
    # generate in memory: cfg.count training and cfg.count held-out scenes
    scene = cfg.scene_config()
    train_seqs, eval_seqs = [], []
    for i in range(cfg.count):
        s = generate_sequence(scene, cfg.seed + i)
        s.name = f"train_{i:03d}"
        train_seqs.append(s)
    for i in range(cfg.count):
        s = generate_sequence(scene, cfg.seed + 10_000 + i)
        s.name = f"eval_{i:03d}"
        eval_seqs.append(s)
    return train_seqs, eval_seqs


def cmd_train(args, cfg: Config):
    from .trainer import train

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_seqs, eval_seqs = _split_train_eval(cfg, args)
    tcfg = cfg.train_config(checkpoint_dir=str(out / "checkpoints"))
    report = train(tcfg, train_seqs, eval_seqs, cfg.provider_spec(),
                   resume_from=args.resume)
    report.write_csv(out / "loss_curve.csv")
    summary = report.to_dict()
    summary.pop("losses", None)
    summary.pop("step_seconds", None)
    dataio.write_json(out / "report.json", summary)
    write_manifest(out, "train", cfg)
    final = report.final_eval or {}
    print(f"trained {report.steps_run} steps; final loss "
          f"{report.losses[-1]:.4f}; held-out J_M {final.get('J_M', float('nan')):.4f}")
    print(f"checkpoint: {report.final_checkpoint}")
    return 0


def cmd_eval(args, cfg: Config):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tolerance = cfg.boundary_tolerance or None
    report = metrics.evaluate_dataset(args.pred, args.gt,
                                      threshold=cfg.threshold, tolerance=tolerance)
    report.write_json(out / "seg_report.json")
    report.write_csv(out / "seg_report.csv")
    write_manifest(out, "eval", cfg)
    print(f"J_M {report.j_m:.4f}  F_M {report.f_m:.4f}  "
          f"J&F {report.jf:.4f}  J_R {report.j_r:.4f}  ({report.frames} frames)")
    return 0


def run_refine_command(cmd, frames_dir, coarse_dir, refined_dir):
    """External refinement contract: the command receives the frame
    directory, the coarse-mask directory, and the output directory, and must
    write one refined PNG per coarse mask."""
    proc = subprocess.run(
        [*cmd.split(), str(frames_dir), str(coarse_dir), str(refined_dir)],
        capture_output=True, text=True,
    )
    if proc.returncode != 0:
        raise DataError(f"refinement command failed: {proc.stderr.strip()}")


def cmd_infer(args, cfg: Config):
    from .trainer import preprocess_sequence

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = MotionSegmenter.load(args.checkpoint)
    seqs = [preprocess_sequence(s, model.cfg.image_size)
            for s in load_dataset(args.data)]
    spec = cfg.provider_spec()
    if spec.kind == "file" and not spec.dataset_dir:
        spec.dataset_dir = args.data
    for seq in seqs:
        probs = model.predict(seq, spec, toggles=cfg.toggles())
        seq_out = out / seq.name
        seq_out.mkdir(parents=True, exist_ok=True)
        for t in range(probs.shape[0]):
            dataio.write_gray_png(seq_out / f"{t:05d}.png", probs[t])
        if args.refine_cmd:
            with tempfile.TemporaryDirectory() as tmp:
                refined_dir = Path(tmp) / "refined"
                refined_dir.mkdir()
                frames_dir = Path(args.data) / seq.name / "frames"
                if not frames_dir.is_dir():
                    frames_dir = Path(tmp) / "frames"
                    frames_dir.mkdir()
                    for t in range(seq.num_frames):
                        dataio.write_rgb_png(frames_dir / f"{t:05d}.png", seq.frames[t])
                run_refine_command(args.refine_cmd, frames_dir, seq_out, refined_dir)
                produced = sorted(refined_dir.glob("*.png"))
                if len(produced) != probs.shape[0]:
                    raise DataError(
                        f"refinement produced {len(produced)} masks for "
                        f"{probs.shape[0]} frames"
                    )
                for f in produced:
                    shutil.copy2(f, seq_out / f.name)
    write_manifest(out, "infer", cfg)
    print(f"wrote masks for {len(seqs)} sequences to {out}")
    return 0


def cmd_bench(args, cfg: Config):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seqs = load_dataset(args.data)
    result = metrics.bench_runtime(args.checkpoint, seqs[0], cfg.provider_spec(),
                                   repetitions=cfg.repetitions)
    dataio.write_json(out / "bench.json", result)
    write_manifest(out, "bench", cfg)
    print(f"{result['seconds_per_frame']:.4f} s/frame over {result['repetitions']} runs")
    return 0


def cmd_gradcheck(args, cfg: Config):
    from .verify import DEFAULT_TOLERANCE, run_suite

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_suite()
    width = max(len(name) for name, _, _ in rows)
    failed = 0
    table = []
    for name, err, ok in rows:
        table.append({"op": name, "max_rel_error": err, "passed": ok})
        print(f"{name:<{width}}  {err:.3e}  {'PASS' if ok else 'FAIL'}")
        failed += 0 if ok else 1
    dataio.write_json(out / "gradcheck.json",
                      {"tolerance": DEFAULT_TOLERANCE, "results": table})
    write_manifest(out, "gradcheck", cfg)
    print(f"{len(rows) - failed}/{len(rows)} passed (tolerance {DEFAULT_TOLERANCE:g})")
    return 0 if failed == 0 else 1


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "bench": cmd_bench,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        _emit_error("config", exc)
        return EXIT_CONFIG
    except (DataError, FormatError) as exc:
        _emit_error("data", exc)
        return EXIT_DATA
    except DivergenceError as exc:
        _emit_error("divergence", exc, step=exc.step)
        return EXIT_DIVERGENCE
    except GeoMotionError as exc:
        _emit_error("error", exc)
        return 1


def _emit_error(kind, exc, **extra):
    payload = {"error": kind, "message": str(exc), **extra}
    print(json.dumps(payload), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
