"""Render accuracy or loss curves from rounds.csv logs.

Usage:
  flsimco-plot --in rounds.csv[,more.csv] --metric top1|loss --out fig.png
               [--dump-series series.csv]

One line per strategy (mean over seeds) with a min-max band. The optional
dump writes the exact plotted series back to CSV so it can be diffed
against the input.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .series import SeriesError, build_series, dump_series_csv, read_rows

AXIS_LABELS = {"top1": "top-1 accuracy", "loss": "mean local loss"}


def render(series, metric: str, out_path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for s in series:
        rounds = [p.round_index for p in s.points]
        means = [p.mean for p in s.points]
        los = [p.lo for p in s.points]
        his = [p.hi for p in s.points]
        line, = ax.plot(rounds, means, label=s.strategy, linewidth=1.8)
        ax.fill_between(rounds, los, his, alpha=0.18, color=line.get_color(), linewidth=0)
    ax.set_xlabel("round")
    ax.set_ylabel(AXIS_LABELS[metric])
    ax.legend(title="strategy")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fmt = out_path.suffix.lstrip(".").lower() or "png"
    metadata = {"Date": None} if fmt == "svg" else {}
    fig.savefig(out_path, format=fmt, metadata=metadata, dpi=120)
    plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="flsimco-plot", description=__doc__)
    parser.add_argument("--in", dest="inputs", required=True,
                        help="rounds.csv path, or several comma-separated")
    parser.add_argument("--metric", choices=("top1", "loss"), required=True)
    parser.add_argument("--out", required=True, help="output image (.png or .svg)")
    parser.add_argument("--dump-series", default=None,
                        help="also write the plotted series to this CSV")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    paths = [Path(p.strip()) for p in args.inputs.split(",") if p.strip()]
    try:
        rows = read_rows(paths)
        series = build_series(rows, args.metric)
    except SeriesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    render(series, args.metric, out_path)
    if args.dump_series:
        Path(args.dump_series).write_text(dump_series_csv(series), encoding="utf-8")
    print(f"wrote {out_path}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
