"""One entry point per figure family, all CSV-in / vector-image-out.

Exit codes: 0 success, 1 malformed or missing input (message names the
offending file and line), 2 usage error.
"""

import argparse
import sys
from pathlib import Path

from .csvdata import MalformedCsvError
from .figures import (
    CURVE_YLABELS,
    FigureSpec,
    render_boundary,
    render_curves,
    render_region,
    render_tail,
)

VECTOR_FORMATS = ("pdf", "svg")


def _build_parser(name: str, description: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=name, description=description)
    parser.add_argument("csv", nargs="+", help="input CSV file(s), one series each")
    parser.add_argument("--out", default=".", help="output directory (default .)")
    parser.add_argument("--output", help="explicit output file (overrides --out)")
    parser.add_argument(
        "--format", choices=VECTOR_FORMATS, default="pdf",
        help="vector image format (default pdf)",
    )
    parser.add_argument(
        "--labels", help="comma-separated series labels (default: from metadata)"
    )
    parser.add_argument("--xlabel", default="", help="override the x-axis label")
    parser.add_argument("--ylabel", default="", help="override the y-axis label")
    return parser


def _spec(args, stem: str, **extras) -> FigureSpec:
    if args.output:
        out_path = Path(args.output)
    else:
        out_path = Path(args.out) / f"{stem}.{args.format}"
    labels = tuple(s.strip() for s in args.labels.split(",")) if args.labels else ()
    return FigureSpec(
        csv_paths=tuple(Path(p) for p in args.csv),
        out_path=out_path,
        labels=labels,
        xlabel=args.xlabel,
        ylabel=args.ylabel,
        extras=extras,
    )


def _run(render, make_spec) -> int:
    try:
        print(render(make_spec()))
    except (MalformedCsvError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


def region_main(argv=None) -> int:
    parser = _build_parser(
        "bcecap-plot-region",
        "overlay effective-capacity frontiers, one series per CSV",
    )
    args = parser.parse_args(argv)
    return _run(render_region, lambda: _spec(args, "region"))


def curves_main(argv=None) -> int:
    parser = _build_parser(
        "bcecap-plot-curves",
        "information/MMSE curves against SNR, one series per CSV",
    )
    parser.add_argument(
        "--column", choices=sorted(CURVE_YLABELS), default="mi_bits",
        help="which curve column to draw (default mi_bits)",
    )
    args = parser.parse_args(argv)
    return _run(
        render_curves,
        lambda: _spec(args, f"curves_{args.column}", column=args.column),
    )


def boundary_main(argv=None) -> int:
    parser = _build_parser(
        "bcecap-plot-boundary",
        "decode-order threshold curves, one series per CSV",
    )
    args = parser.parse_args(argv)
    return _run(render_boundary, lambda: _spec(args, "boundary"))


def tail_main(argv=None) -> int:
    parser = _build_parser(
        "bcecap-plot-tail",
        "queue tail ln Pr(Q >= q) with fitted decay slopes",
    )
    args = parser.parse_args(argv)
    return _run(render_tail, lambda: _spec(args, "tail"))
