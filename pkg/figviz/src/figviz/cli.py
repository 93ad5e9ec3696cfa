"""Command line entry: validate every input, then draw one figure.

Exit codes: 0 on success, 1 for missing or malformed input tables and
rendering errors, 2 for usage mistakes (argparse).
"""

import argparse
import sys
from typing import Optional, Sequence

from figviz.render import KINDS, Style, render
from figviz.schemas import SchemaError, load_inputs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figviz", description="render simulator CSV tables as figures")
    sub = parser.add_subparsers(dest="command", required=True)
    cmd = sub.add_parser("render", help="render one figure from CSV inputs")
    cmd.add_argument("--kind", required=True, choices=sorted(KINDS))
    cmd.add_argument("--in", dest="inputs", nargs="+", required=True,
                     metavar="CSV", help="input tables, order matters")
    cmd.add_argument("--out", required=True, help="output .png path")
    cmd.add_argument("--title", default=None)
    cmd.add_argument("--xlabel", default=None)
    cmd.add_argument("--ylabel", default=None)
    cmd.add_argument("--logy", action="store_true",
                     help="log scale on the y axis (sweep-lines)")
    cmd.add_argument("--no-references", action="store_true",
                     help="suppress the SQL/HL guide lines")
    cmd.add_argument("--projection", action="store_true",
                     help="add the orthographic panel (bloch-husimi)")
    cmd.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    style = Style(
        title=args.title,
        xlabel=args.xlabel,
        ylabel=args.ylabel,
        logy=args.logy,
        references=not args.no_references,
        projection=args.projection,
        dpi=args.dpi,
    )
    try:
        tables = load_inputs(args.kind, args.inputs)
        render(args.kind, tables, style, args.out)
    except (SchemaError, ValueError, OSError) as err:
        print(f"figviz: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
