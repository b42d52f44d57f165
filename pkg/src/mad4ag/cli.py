"""Command-line entry point: composable pipeline stages plus an end-to-end run.

Exit codes: 0 ok, 2 config error, 3 data error, 4 missing prerequisite.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import load_config
from .core import ConfigError, DataError, PipelineError, PrerequisiteError
from .pipeline import Pipeline, STAGE_ORDER

SUBCOMMANDS = STAGE_ORDER + ("all",)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mad4ag",
        description="Synthesize average-weekday activity-travel plans from GPS traces and survey diaries.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS, help="pipeline stage to run ('all' chains every stage)")
    parser.add_argument("--config", default=None, help="flat key=value configuration file")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker processes for per-device stages")
    parser.add_argument("--out", default="out", help="output directory for all stage artifacts")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress to stderr")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        overrides = {}
        for item in args.overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, _, value = item.partition("=")
            overrides[key.strip()] = value
        if args.seed is not None:
            overrides["seed"] = str(args.seed)
        cfg = load_config(args.config, overrides)
        pipeline = Pipeline(cfg, args.out, workers=args.workers)
        if args.subcommand == "all":
            pipeline.run_all()
        else:
            pipeline.run(args.subcommand)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PrerequisiteError as exc:
        print(f"prerequisite error: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
