"""Command line interface.

Subcommands: run, eval, synth, viz, validate. Exit codes: 0 on success,
2 when a two-pass run stopped to request prototypes, 1 on any error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .errors import PipelineError
from .metrics import evaluate_dataset, format_table, write_metrics_json
from .pipeline import STATUS_OK, STATUS_PROTOTYPES_REQUESTED, config_load, run_many
from .synth import SynthConfig, derive_group_seed, generate_group
from .types import PipelineConfig
from .interchange import validate_group_dir
from .viz import viz

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PROTOTYPES_REQUESTED = 2


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON file with config overrides")
    for field in fields(PipelineConfig):
        flag = "--" + field.name.replace("_", "-")
        if field.name == "tie_break_policy":
            parser.add_argument(flag, dest=field.name, choices=["mask_id"])
        elif field.name in ("t", "t_r"):
            parser.add_argument(flag, dest=field.name, type=int)
        else:
            parser.add_argument(flag, dest=field.name, type=float)


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {
        field.name: getattr(args, field.name)
        for field in fields(PipelineConfig)
        if getattr(args, field.name, None) is not None
    }
    return config_load(args.config, overrides)


def _cmd_run(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    statuses = run_many(args.group_dirs, config, mode=args.mode, jobs=args.jobs)
    worst = EXIT_OK
    for directory, status in statuses:
        print(f"{status:24s} {directory}")
        if status.startswith("error"):
            worst = EXIT_ERROR
        elif status == STATUS_PROTOTYPES_REQUESTED and worst != EXIT_ERROR:
            worst = EXIT_PROTOTYPES_REQUESTED
    return worst


def _cmd_eval(args: argparse.Namespace) -> int:
    report = evaluate_dataset(args.pred, args.gt)
    print(format_table(report))
    out = args.out if args.out is not None else Path(args.pred) / "metrics.json"
    write_metrics_json(report, out)
    print(f"metrics written to {out}")
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    out_root = Path(args.out)
    for index in range(args.groups):
        config = SynthConfig(
            seed=derive_group_seed(args.seed, index),
            n_images=args.images_per_group,
            width=args.width,
            height=args.height,
            n_distractors=args.distractors,
        )
        group_id = f"group_{index:03d}"
        target = out_root / group_id
        generate_group(config, target, group_id=group_id)
        print(f"generated {target}")
    return EXIT_OK


def _cmd_viz(args: argparse.Namespace) -> int:
    written = viz(args.group_dir, out_dir=args.out, images_dir=args.images)
    for path in written:
        print(f"rendered {path}")
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    status = EXIT_OK
    for directory in args.group_dirs:
        problems = validate_group_dir(directory)
        if problems:
            status = EXIT_ERROR
            print(f"INVALID {directory}")
            for problem in problems:
                print(f"  - {problem}")
        else:
            print(f"valid   {directory}")
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cosal",
        description="Training-free co-salient object detection over mask proposals.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the pipeline over group directories")
    run.add_argument("group_dirs", nargs="+", type=Path, metavar="GROUP_DIR")
    run.add_argument("--mode", choices=["oneshot", "two-pass"], default="oneshot")
    run.add_argument("--jobs", type=int, default=1, help="concurrent groups")
    _add_config_flags(run)
    run.set_defaults(handler=_cmd_run)

    ev = sub.add_parser("eval", help="score predictions against ground truth")
    ev.add_argument("--pred", required=True, type=Path, help="directory of prediction PNGs")
    ev.add_argument("--gt", required=True, type=Path, help="directory of ground-truth PNGs")
    ev.add_argument("--out", type=Path, help="where to write metrics.json")
    ev.set_defaults(handler=_cmd_eval)

    synth = sub.add_parser("synth", help="generate synthetic groups with ground truth")
    synth.add_argument("--out", required=True, type=Path)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--groups", type=int, default=1)
    synth.add_argument("--images-per-group", type=int, default=5)
    synth.add_argument("--width", type=int, default=96)
    synth.add_argument("--height", type=int, default=96)
    synth.add_argument("--distractors", type=int, default=1)
    synth.set_defaults(handler=_cmd_synth)

    vz = sub.add_parser("viz", help="render prediction overlays")
    vz.add_argument("group_dir", type=Path)
    vz.add_argument("--images", type=Path, help="directory of source images")
    vz.add_argument("--out", type=Path, help="output directory (default <group>/viz)")
    vz.set_defaults(handler=_cmd_viz)

    val = sub.add_parser("validate", help="check interchange directories")
    val.add_argument("group_dirs", nargs="+", type=Path, metavar="GROUP_DIR")
    val.set_defaults(handler=_cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
