"""Command line entry point: `bip <experiment> --config FILE [--seed S]
[--workers W] [--out DIR]`."""

from __future__ import annotations

import argparse
import sys

from .harness import (
    EXIT_CONFIG,
    EXIT_DIVERGENCE,
    ConfigError,
    parse_config,
    run_experiment,
)
from .inference import ChainDivergenceError
from .navier_stokes import DivergenceError

KINDS = ("heat-rate", "stokes-lagrangian", "ns-eulerian", "metric-props", "synth")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bip",
        description="Bayesian inversion experiments for dissipative PDE initial conditions",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run the {kind} experiment")
        sp.add_argument("--config", required=True, help="INI config file")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--workers", type=int, default=None, help="worker pool size")
        sp.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"experiment.kind": args.kind}
    if args.seed is not None:
        overrides["experiment.seed"] = str(args.seed)
    if args.workers is not None:
        overrides["experiment.workers"] = str(args.workers)
    if args.out is not None:
        overrides["experiment.out"] = args.out
    try:
        cfg = parse_config(args.config, overrides)
        return run_experiment(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, ChainDivergenceError) as e:
        print(f"numerical divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
