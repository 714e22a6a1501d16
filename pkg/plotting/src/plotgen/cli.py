"""Command line entry point: plotgen INPUT --kind ... --group ... --out ..."""

import argparse
import sys

import matplotlib

from .core import GROUP_KEYS, KIND_COLUMNS, PlotError, PlotSpec, render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plotgen",
        description="Render line charts from sweep summary CSVs.")
    parser.add_argument("input", help="summary CSV path")
    parser.add_argument("--kind", choices=sorted(KIND_COLUMNS),
                        default="rate_vs_snr", help="which figure to draw")
    parser.add_argument("--group", choices=GROUP_KEYS, default="algorithm",
                        help="column that labels the line series")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--title", default=None)
    parser.add_argument("--xlabel", default="SNR (dB)")
    parser.add_argument("--ylabel", default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    try:
        spec = PlotSpec(input=args.input, kind=args.kind, group=args.group,
                        out=args.out, title=args.title, xlabel=args.xlabel,
                        ylabel=args.ylabel)
        fig = render(spec)
        plt.close(fig)
    except (PlotError, OSError) as exc:
        print(f"plotgen: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
