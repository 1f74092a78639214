"""Command-line entry point.

Each subcommand runs exactly one pipeline stage against a JSON config,
except ``run`` which executes the full sequence.  Because stages talk
through files in the output directory, invoking them one at a time from
the shell is equivalent to one composed ``run``.

Exit codes: 0 success, 2 configuration problems, 3 data problems,
4 numerical failures (sampling, calibration, root finding, degenerate
diagnostics).
"""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError, DataError, NumericalError
from .config import load_config
from .pipeline import STAGES, run_pipeline, run_stage

_STAGE_HELP = {
    "distfit": "rank candidate severity distributions on event losses",
    "simulate": "generate synthetic event and rate files with a truth ledger",
    "fit-crm": "fit the clustered seasonal loss panel model",
    "fit-cir": "fit the square-root short-rate model",
    "price": "calibrate scenario weights and price the bond",
    "premium": "solve the premium spread across the maturity ladder",
    "diagnose": "write convergence and pricing diagnostics",
    "run": "execute fit-crm, fit-cir, price, premium and diagnose in order",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="catbond",
        description="Bayesian catastrophe-bond pricing pipeline",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "run"):
        sub = subparsers.add_parser(name, help=_STAGE_HELP[name])
        sub.add_argument("config", help="path to the JSON run configuration")
        sub.add_argument(
            "--seed", type=int, default=None,
            help="override the seed from the config file",
        )
        sub.add_argument(
            "--out", default=None,
            help="override the output directory from the config file",
        )
        sub.add_argument(
            "--threads", type=int, default=None,
            help="override the thread count from the config file",
        )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(
            args.config, seed=args.seed, out_dir=args.out, threads=args.threads
        )
        if args.command == "run":
            run_pipeline(config)
        else:
            run_stage(config, args.command)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
