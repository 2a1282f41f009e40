"""Command-line entry point.

Exit codes: 0 success, 2 config error, 3 missing stage input, 4 data
invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .errors import ConfigError, DataError, StageInputError
from .pipeline import ALL_STAGES, RUN_STAGES, run_pipeline, run_stage

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE_INPUT = 3
EXIT_DATA = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corpusforge",
        description="Manifest-driven construction and evaluation of multi-genre speaker corpora.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline config (TOML)")
    common.add_argument("--workdir", default=None, help="override [paths].workdir")
    common.add_argument("--seed", type=int, default=None, help="override run.seed")
    common.add_argument("--jobs", type=int, default=None, help="override run.jobs")

    sub = parser.add_subparsers(dest="command", required=True)
    for stage in ALL_STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
    run = sub.add_parser("run", parents=[common], help="run the full pipeline")
    run.add_argument(
        "--stages",
        default=None,
        help=f"comma-separated subset of stages (default: {','.join(RUN_STAGES)})",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stdout, level=logging.INFO, format="%(message)s")
    try:
        cfg = load_config(args.config, workdir=args.workdir, seed=args.seed, jobs=args.jobs)
        if args.command == "run":
            stages = args.stages.split(",") if args.stages else None
            run_pipeline(cfg, stages)
        else:
            run_stage(cfg, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageInputError as exc:
        print(f"stage input error: {exc}", file=sys.stderr)
        return EXIT_STAGE_INPUT
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
