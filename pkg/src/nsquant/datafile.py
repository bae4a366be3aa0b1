"""CSV ingestion and export of univariate series."""
from __future__ import annotations

import csv
import math

import numpy as np

from .errors import ParseError
from .solver import UnitTimeSeries


def _num(s: str):
    try:
        v = float(s)
    except ValueError:
        return None
    return v


def read_series(path) -> tuple[UnitTimeSeries, list[str]]:
    """Read ``label,value`` or single-column ``value`` rows; a header row is optional.

    Row order defines time.  Returns the series and the labels (row numbers
    when the file has a single column).
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: no data rows")
    ncol = len(rows[0])
    if ncol not in (1, 2):
        raise ParseError(f"{path}: expected 1 or 2 columns, found {ncol}")
    start = 0
    if _num(rows[0][-1].strip()) is None:
        start = 1
    labels, values, bad = [], [], []
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if len(row) != ncol:
            bad.append(lineno)
            continue
        v = _num(row[-1].strip())
        if v is None or not math.isfinite(v):
            bad.append(lineno)
            continue
        labels.append(row[0].strip() if ncol == 2 else str(lineno - start))
        values.append(v)
    if bad:
        shown = ", ".join(map(str, bad[:10])) + (" ..." if len(bad) > 10 else "")
        raise ParseError(f"{path}: non-numeric or malformed values on rows {shown}")
    if not values:
        raise ParseError(f"{path}: no data rows")
    return UnitTimeSeries(np.array(values)), labels


def write_series(path, series, labels=None) -> None:
    values = series.values if isinstance(series, UnitTimeSeries) else np.asarray(series, dtype=float)
    if labels is None:
        labels = [str(i) for i in range(1, values.size + 1)]
    with open(path, "w", newline="") as fh:
        fh.write("label,value\n")
        for lab, v in zip(labels, values):
            fh.write(f"{lab},{format(float(v), '.17g')}\n")


def deseasonalize(values, period: int) -> np.ndarray:
    """Subtract the mean of each residue class ``i mod period``."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if period < 2:
        raise ValueError("period must be at least 2")
    if period > n / 2:
        raise ValueError(f"period {period} exceeds half the series length {n}")
    out = x.copy()
    for r in range(period):
        cls = out[r::period]
        out[r::period] = cls - cls.mean()
        # second pass removes the rounding residue of the first
        out[r::period] -= out[r::period].mean()
    return out
