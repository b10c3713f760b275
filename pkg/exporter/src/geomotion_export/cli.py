"""geomotion-export: run a geometry backbone and a flow estimator over a
clip and write the geomotion file-provider layout."""

import argparse
import sys

from .export import ExportJob, run_export
from .models import ModelLoadError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="geomotion-export",
        description=__doc__,
    )
    parser.add_argument("--frames", required=True, help="input frame directory")
    parser.add_argument("--out", required=True, help="output dataset directory")
    parser.add_argument("--backbone", default="mock",
                        help="mock | torchhub:<repo>:<entry>")
    parser.add_argument("--flow", default="blockmatch",
                        help="blockmatch[:radius] | torchvision-raft-small | "
                             "torchvision-raft-large")
    parser.add_argument("--image-size", type=int, default=518)
    parser.add_argument("--patch-size", type=int, default=14)
    parser.add_argument("--channels", type=int, default=1024,
                        help="per-layer feature width C (streams carry 2C)")
    parser.add_argument("--d-cam", type=int, default=512)
    parser.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    job = ExportJob(
        frames_dir=args.frames, output_dir=args.out, backbone=args.backbone,
        flow=args.flow, image_size=args.image_size, patch_size=args.patch_size,
        channels=args.channels, d_cam=args.d_cam, seed=args.seed,
    )
    try:
        out = run_export(job)
    except (ModelLoadError, ValueError) as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
