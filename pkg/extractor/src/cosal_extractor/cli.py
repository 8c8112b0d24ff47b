"""Command line entry point.

    cosal-extract --images photos/ --out group_000/
    cosal-extract --images photos/ --out group_000/ --requests-only

The first form writes masks, attention, and a manifest for every image.
The second answers a pending prototype_requests.json in the output
directory, which is how a paused two-pass consumer run gets its
prototype tables.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import BACKENDS, DEFAULT_CONFIG, ExtractorConfig
from .errors import ExtractorError
from .extract import answer_requests, extract_group, make_backend

EXIT_OK = 0
EXIT_ERROR = 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cosal-extract",
        description="populate an interchange group directory from images",
    )
    parser.add_argument("--images", required=True, type=Path, help="directory of input images")
    parser.add_argument("--out", required=True, type=Path, help="group directory to write")
    parser.add_argument(
        "--requests-only",
        action="store_true",
        help="answer the group's prototype_requests.json instead of extracting",
    )
    parser.add_argument("--backend", choices=BACKENDS, default=DEFAULT_CONFIG.backend)
    parser.add_argument("--group-id", help="manifest group_id (default: output directory name)")
    parser.add_argument("--device", default=DEFAULT_CONFIG.device)
    parser.add_argument("--crop-size", type=int, default=DEFAULT_CONFIG.crop_size)
    parser.add_argument(
        "--sam-checkpoint", help="segmentation model weights (neural backend)"
    )
    parser.add_argument(
        "--feature-weights", help="feature model weights or hub name (neural backend)"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = ExtractorConfig(
        backend=args.backend, device=args.device, crop_size=args.crop_size
    )
    model_paths = {}
    if args.backend == "neural":
        model_paths = {
            "sam_checkpoint": args.sam_checkpoint,
            "feature_weights": args.feature_weights,
        }
    try:
        backend = make_backend(config, **model_paths)
        if args.requests_only:
            report = answer_requests(args.images, args.out, config, backend)
            print(f"answered prototypes for {len(report.answered)} image(s) in {report.out_dir}")
        else:
            report = extract_group(
                args.images, args.out, config, backend, group_id=args.group_id
            )
            print(f"extracted {len(report.image_ids)} image(s) into {report.out_dir}")
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for line in report.errors:
        print(f"error: {line}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
