"""Command-line entry point: pumpfigs render --figure ID --in PATH... --out PATH."""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .data import InputError
from .figures import FIGURES, FigureSpec, render

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pumpfigs",
        description="Render publication figures from persisted sweep files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    rend = sub.add_parser("render", help="render one figure from input files")
    rend.add_argument("--figure", required=True, help=f"one of {', '.join(FIGURES)}")
    rend.add_argument("--in", dest="inputs", action="append", required=True,
                      metavar="PATH", help="input file (repeatable)")
    rend.add_argument("--out", required=True, help="output image path")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    spec = FigureSpec(figure=args.figure, inputs=tuple(args.inputs), out=args.out)
    try:
        written = render(spec)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    print(written)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
