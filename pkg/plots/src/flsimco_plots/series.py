"""Grouped plotting series from simulator round logs.

Reads one or more rounds.csv files and reduces them to one series per
strategy: per-round mean over seeds plus the min-max band. Values are taken
from the CSV verbatim; nothing is recomputed from model state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

METRIC_COLUMNS = {"top1": "top1", "loss": "mean_local_loss"}


class SeriesError(ValueError):
    pass


@dataclass(frozen=True)
class SeriesPoint:
    round_index: int
    mean: float
    lo: float
    hi: float


@dataclass(frozen=True)
class StrategySeries:
    strategy: str
    points: tuple[SeriesPoint, ...]


def read_rows(paths: list[Path]) -> list[dict]:
    rows: list[dict] = []
    for path in paths:
        if not path.exists():
            raise SeriesError(f"input file not found: {path}")
        with path.open(newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None:
                raise SeriesError(f"empty input file: {path}")
            rows.extend(reader)
    if not rows:
        raise SeriesError("no data rows in input")
    return rows


def build_series(rows: list[dict], metric: str) -> list[StrategySeries]:
    if metric not in METRIC_COLUMNS:
        raise SeriesError(f"unknown metric '{metric}', expected one of {sorted(METRIC_COLUMNS)}")
    column = METRIC_COLUMNS[metric]
    if any(column not in row for row in rows):
        raise SeriesError(f"column '{column}' missing from input")

    grouped: dict[tuple[str, int], list[float]] = {}
    for row in rows:
        value = row[column]
        if value is None or value == "":
            continue  # metric not recorded this round (eval stride)
        key = (row["strategy"], int(row["round"]))
        grouped.setdefault(key, []).append(float(value))
    if not grouped:
        raise SeriesError(f"no values for metric '{metric}' in input")

    strategies = sorted({s for s, _ in grouped})
    series = []
    for strategy in strategies:
        rounds = sorted(r for s, r in grouped if s == strategy)
        points = []
        for r in rounds:
            values = grouped[(strategy, r)]
            points.append(SeriesPoint(round_index=r,
                                      mean=sum(values) / len(values),
                                      lo=min(values), hi=max(values)))
        series.append(StrategySeries(strategy=strategy, points=tuple(points)))
    return series


def dump_series_csv(series: list[StrategySeries]) -> str:
    lines = ["strategy,round,mean,lo,hi"]
    for s in series:
        for p in s.points:
            lines.append(f"{s.strategy},{p.round_index},{p.mean!r},{p.lo!r},{p.hi!r}")
    return "\n".join(lines) + "\n"
