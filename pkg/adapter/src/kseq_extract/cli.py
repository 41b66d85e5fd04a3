"""kseq-extract command line: single-video and batch extraction."""

from __future__ import annotations

import argparse
import sys

from .backends import BackendError
from .extract import ExtractionError, ExtractionJob, batch_extract, extract_video


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kseq-extract",
        description="Extract holistic keypoints from video into .kseq files.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract one video")
    p.add_argument("--video", required=True)
    p.add_argument("--fps", type=float, required=True)
    p.add_argument("--layout", choices=["holistic_full", "pose_only"],
                   default="holistic_full")
    p.add_argument("--label", default=None)
    p.add_argument("--classes", nargs="+", default=["payment", "evasion"])
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=["mediapipe", "synthetic"],
                   default="mediapipe")
    p.set_defaults(single=True)

    p = sub.add_parser("batch", help="extract a directory of class subfolders")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fps", type=float, required=True)
    p.add_argument("--layout", choices=["holistic_full", "pose_only"],
                   default="holistic_full")
    p.add_argument("--backend", choices=["mediapipe", "synthetic"],
                   default="mediapipe")
    p.set_defaults(single=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.single:
            job = ExtractionJob(
                video_path=args.video, target_fps=args.fps, layout=args.layout,
                output_path=args.out, label=args.label,
                classes=tuple(args.classes), backend=args.backend)
            extract_video(job)
            print(f"wrote {args.out}")
        else:
            written, errors = batch_extract(
                args.dir, args.out, args.fps, layout=args.layout,
                backend_name=args.backend)
            print(f"wrote {len(written)} files to {args.out}")
            for err in errors:
                print(f"warning: {err}", file=sys.stderr)
            if errors:
                print(f"{len(errors)} file(s) failed", file=sys.stderr)
        return 0
    except (ValueError, ExtractionError, BackendError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
