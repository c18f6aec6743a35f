"""Figure rendering for simulator round logs; consumes rounds.csv files only."""

from .series import SeriesPoint, StrategySeries, build_series, dump_series_csv, read_rows

__all__ = ["SeriesPoint", "StrategySeries", "build_series", "dump_series_csv", "read_rows"]

__version__ = "0.1.0"
