"""Command-line interface.

Each subcommand runs the deterministic pipeline from the configuration
file through its own stage, so ``sibgxe fit --config run.toml`` produces
exactly the inputs it needs before fitting.  Exit codes: 0 on success, 2
on invalid input or configuration, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import InputError, NumericalError
from .pipeline import run_pipeline

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

_COMMANDS = {
    "simulate": "simulate",
    "scan": "scan",
    "score": "score",
    "fit": "fit",
    "ri": "ri",
    "report": "report",
    "pipeline": "report",  # the full run ends at the report stage
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sibgxe",
        description="Sibling-cohort simulation and within-family "
                    "gene-by-environment estimation pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, stage in _COMMANDS.items():
        doc = ("run the full pipeline" if name == "pipeline"
               else f"run the pipeline through the {stage} stage")
        cmd = sub.add_parser(name, help=doc, description=doc)
        cmd.add_argument("--config", required=True,
                         help="path to the TOML run configuration")
        cmd.add_argument("--out", required=True,
                         help="output directory for run artifacts")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the configured seed")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        run_pipeline(config, args.out,
                     through_stage=_COMMANDS[args.command], seed=args.seed)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
