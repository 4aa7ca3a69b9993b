"""CLI: ``plot --mode isnr|scaling --in sweep.csv --out figure.png``."""

from __future__ import annotations

import argparse
import os
import sys

from .render import MODES, FigureSpec, SchemaError, render


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="plot", description="Render sweep-output figures")
    parser.add_argument("--mode", required=True, choices=MODES)
    parser.add_argument("--in", dest="input_csv", required=True,
                        help="sweep CSV (harness schema)")
    parser.add_argument("--out", dest="output_image", required=True,
                        help="output image path")
    parser.add_argument("--kc", type=int, default=None,
                        help="coherence length for isnr mode (default: largest)")
    parser.add_argument("--bits", action="store_true",
                        help="draw information axes in bits instead of nats")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    if not os.path.exists(args.input_csv):
        print(f"input CSV not found: {args.input_csv}", file=sys.stderr)
        return 1
    spec = FigureSpec(input_csv=args.input_csv, output_image=args.output_image,
                      mode=args.mode, kc=args.kc, bits=args.bits)
    try:
        render(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.output_image}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
