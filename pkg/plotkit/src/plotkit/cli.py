"""Command line front end: plotkit --kind <kind> --in <csv...> --out <img>."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureSpec, SchemaError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plotkit",
                                     description="render experiment figures from csv traces")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="inputs", required=True, nargs="+",
                        help="input csv file(s)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--bound", type=float, default=2.25,
                        help="bound lines for constrained trajectories")
    parser.add_argument("--title", default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    spec = FigureSpec(inputs=tuple(args.inputs), kind=args.kind, output=args.out,
                      bound=args.bound, title=args.title)
    try:
        render(spec)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
