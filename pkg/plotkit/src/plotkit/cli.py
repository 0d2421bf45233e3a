"""Command line entry point: `bip-plot --kind <k> --in <csv> --out <img>`."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, PlotError, PlotSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bip-plot", description="render bip harness CSVs")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument(
        "--in", dest="inputs", required=True, action="append", help="input CSV (repeatable)"
    )
    parser.add_argument("--out", required=True, help="output PNG path")
    parser.add_argument("--group", default="N", choices=("N", "dt"), help="histogram grouping column")
    parser.add_argument("--title", default=None)
    parser.add_argument("--xlabel", default=None)
    parser.add_argument("--ylabel", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    labels = {k: v for k, v in (("title", args.title), ("xlabel", args.xlabel), ("ylabel", args.ylabel)) if v}
    try:
        spec = PlotSpec(args.kind, args.inputs, args.out, labels=labels, group_by=args.group)
        render(spec)
    except PlotError as e:
        print(f"plot error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
