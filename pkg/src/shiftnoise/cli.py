"""Command-line front end.

    shiftnoise run <config.toml|config.json> [--strict] [--out DIR]
    shiftnoise sweep <config> [--jobs N] [--strict] [--out DIR]
    shiftnoise accept [--quick] [--out DIR]

`run` executes one experiment config; `sweep` runs a grid config with
worker parallelism (outputs are identical for any --jobs); `accept` runs
the acceptance suite and exits nonzero if any criterion fails.  The
default output root is $SHIFTNOISE_OUT, falling back to ./runs.
"""

from __future__ import annotations

import argparse
import sys

from . import acceptance, harness


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftnoise",
        description="Synthetic lab for label noise generated by domain shift.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("config", help="path to a .toml or .json experiment config")
    p_run.add_argument("--strict", action="store_true",
                       help="exit nonzero if any bound-check flag fails")
    p_run.add_argument("--out", default=None, help="output directory override")

    p_sweep = sub.add_parser("sweep", help="execute a grid config in parallel")
    p_sweep.add_argument("config", help="path to a grid-kind config")
    p_sweep.add_argument("--jobs", type=int, default=1, help="worker processes")
    p_sweep.add_argument("--strict", action="store_true",
                         help="exit nonzero if any bound-check flag fails")
    p_sweep.add_argument("--out", default=None, help="output directory override")

    p_accept = sub.add_parser("accept", help="run the acceptance suite")
    p_accept.add_argument("--quick", action="store_true",
                          help="smoke variant with reduced sample sizes")
    p_accept.add_argument("--out", default=None,
                          help="directory for acceptance.txt / acceptance.json")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return harness.run(args.config, out_dir=args.out, strict=args.strict)
    if args.command == "sweep":
        return harness.sweep(args.config, jobs=args.jobs, out_dir=args.out,
                             strict=args.strict)
    if args.command == "accept":
        return acceptance.run_all(quick=args.quick, out_dir=args.out)
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
