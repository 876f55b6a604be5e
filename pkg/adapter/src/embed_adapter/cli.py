"""Command-line batch exporter."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .encoders import AdapterError
from .export import ExtractionJob, read_image_list, run_export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-adapter",
        description="Extract image token embeddings and prompt embeddings into manifest+blob files.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="encode an image list and a prompt text file")
    p.add_argument("--images", required=True, help="CSV with path,grade columns")
    p.add_argument("--prompts", required=True, help="prompt text JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--checkpoint", help="visual encoder state-dict file")
    p.add_argument("--seed", type=int, default=0, help="weight and projection seed")
    p.set_defaults(func=cmd_export)
    return parser


def cmd_export(args) -> int:
    job = ExtractionJob(
        images=read_image_list(args.images),
        prompts_path=args.prompts,
        out_dir=args.out,
        checkpoint=args.checkpoint,
        seed=args.seed,
    )
    report = run_export(job)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (AdapterError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
