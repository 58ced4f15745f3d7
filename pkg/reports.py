# reports.py
from __future__ import annotations

from pathlib import Path
from typing import Optional, Union

import msgspec
import pandas as pd
from tabulate import tabulate

import config
from harness import ExperimentReport


def report_frame(report: ExperimentReport) -> pd.DataFrame:
    return pd.DataFrame(report.rows, columns=report.columns)


def to_csv(report: ExperimentReport) -> str:
    """Byte-stable CSV: fixed column order, %.12g floats, NaN as empty."""
    return report_frame(report).to_csv(
        index=False, float_format=f"%.{config.CSV_DIGITS}g", lineterminator="\n")


def to_json(report: ExperimentReport) -> bytes:
    # non-finite floats encode as null
    return msgspec.json.encode(report)


def render(report: ExperimentReport, fmt: str = "csv") -> bytes:
    if fmt == "csv":
        return to_csv(report).encode("utf-8")
    if fmt == "json":
        return to_json(report)
    raise ValueError(f"unknown format {fmt!r}")


def write_report(report: ExperimentReport, path: Union[str, Path], fmt: str = "csv") -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(render(report, fmt))
    return path


def preview(report: ExperimentReport, max_rows: Optional[int] = 20) -> str:
    """Grid table of the first rows, for the console."""
    rows = report.rows if max_rows is None else report.rows[:max_rows]
    table = [[row.get(c) for c in report.columns] for row in rows]
    text = tabulate(table, headers=report.columns, tablefmt="grid", floatfmt=".6g")
    hidden = len(report.rows) - len(rows)
    if hidden > 0:
        text += f"\n... {hidden} more rows"
    return text
