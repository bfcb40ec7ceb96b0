"""`sparsepr-plot`: turn benchmark CSV files into figures.

Usage: sparsepr-plot --kind SuccessVsM --in sweep.csv [--in more.csv] --out fig.svg

Exit codes: 0 on success, 1 for invalid arguments, 2 for runtime failures
(including input files that do not match the schema the kind requires).
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional

from .render import FigureKind, FigureSpec, SchemaError, render


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsepr-plot", description=__doc__)
    parser.add_argument("--kind", required=True, choices=[k.value for k in FigureKind],
                        help="figure type")
    parser.add_argument("--in", dest="inputs", action="append", required=True,
                        metavar="CSV", help="input CSV (repeatable)")
    parser.add_argument("--out", required=True, metavar="IMG", help="output image path")
    parser.add_argument("--png", action="store_true", help="write PNG instead of SVG")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        spec = FigureSpec(inputs=tuple(args.inputs), kind=FigureKind(args.kind),
                          output=args.out, png=args.png)
        import matplotlib.pyplot as plt

        fig = render(spec)
        plt.close(fig)
        return 0
    except UsageError as exc:
        print(f"sparsepr-plot: error: {exc}", file=sys.stderr)
        return 1
    except SchemaError as exc:
        print(f"sparsepr-plot: schema error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"sparsepr-plot: runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
