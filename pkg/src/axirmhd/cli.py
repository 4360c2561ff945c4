"""Command-line entry points: run a config file, launch a named benchmark,
or fit power-law slopes on a snapshot."""

from __future__ import annotations

import argparse
import sys

from . import bench
from .errors import ConfigurationError, FormatError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="axirmhd",
                                     description="axisymmetric radiative MHD solver bench")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="execute a key = value config file")
    p_run.add_argument("config")
    p_run.add_argument("-o", "--outdir", default=None)

    p_bench = sub.add_parser("bench", help="run a named benchmark problem")
    p_bench.add_argument("name", choices=bench.PROBLEMS)
    p_bench.add_argument("-o", "--outdir", default=None)
    p_bench.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                         help="override a config key")

    p_an = sub.add_parser("analyze", help="equatorial log-log slopes of a snapshot")
    p_an.add_argument("snapshot")
    p_an.add_argument("--rmin", type=float, default=5.0)
    p_an.add_argument("--rmax", type=float, default=50.0)

    args = parser.parse_args(argv)
    try:
        if args.cmd == "run":
            return bench.run(args.config, outdir=args.outdir)
        if args.cmd == "bench":
            text = "\n".join([f"problem = {args.name}"] + [s.replace("=", " = ", 1) for s in args.set])
            cfg = bench.parse_config(text)
            return bench.run(cfg, outdir=args.outdir)
        if args.cmd == "analyze":
            (sr, er), (sv, ev) = bench.analyze_slopes(args.snapshot, args.rmin, args.rmax)
            print(f"density slope  {sr:+.6f} +- {er:.2e}")
            print(f"velocity slope {sv:+.6f} +- {ev:.2e}")
            return 0
    except (ConfigurationError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
