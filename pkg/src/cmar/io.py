"""File formats: matrix series CSV (long or wide), JSON parameters, atomic writes."""
from __future__ import annotations

import json
import os
import re
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from .core import MatrixSeries

_WIDE = re.compile(r"^v_(\d+)_(\d+)$")


class FormatError(ValueError):
    pass


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _parse_index(col: pd.Series):
    if pd.api.types.is_integer_dtype(col):
        return None
    try:
        dates = pd.to_datetime(col.astype(str), format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise FormatError(f"time column is neither integer steps nor ISO-8601 dates: {exc}")
    return tuple(d.date().isoformat() if d == d.normalize() else d.isoformat() for d in dates)


def read_series(path) -> MatrixSeries:
    """Read a matrix series from CSV, detecting long or wide layout from the header.

    Long: ``t,row,col,value`` (1-based row/col). Wide: ``t,v_1_1,v_2_1,...``
    with one column per entry.
    """
    df = pd.read_csv(path, float_precision="round_trip")
    cols = [c.strip() for c in df.columns]
    df.columns = cols
    if cols[:1] != ["t"]:
        raise FormatError("first column must be 't'")
    if cols == ["t", "row", "col", "value"]:
        if df.isna().any().any():
            raise FormatError("missing values in series file")
        times = list(dict.fromkeys(df["t"].tolist()))
        d1, d2 = int(df["row"].max()), int(df["col"].max())
        pos = {t: i for i, t in enumerate(times)}
        vals = np.full((len(times), d1, d2), np.nan)
        vals[df["t"].map(pos).to_numpy(), df["row"].to_numpy() - 1, df["col"].to_numpy() - 1] = df["value"].to_numpy(float)
        if np.isnan(vals).any():
            raise FormatError("long-format series has missing cells")
        index = _parse_index(pd.Series(times))
        return MatrixSeries(vals, index)
    cells = []
    for c in cols[1:]:
        m = _WIDE.match(c)
        if not m:
            raise FormatError(f"unrecognised column {c!r}; expected t,row,col,value or t,v_1_1,...")
        cells.append((int(m.group(1)), int(m.group(2))))
    if df.isna().any().any():
        raise FormatError("missing values in series file")
    d1 = max(i for i, _ in cells)
    d2 = max(j for _, j in cells)
    if len(set(cells)) != d1 * d2 or len(cells) != d1 * d2:
        raise FormatError("wide header does not cover a full d1 x d2 grid")
    vals = np.empty((len(df), d1, d2))
    for c, (i, j) in zip(cols[1:], cells):
        vals[:, i - 1, j - 1] = df[c].to_numpy(float)
    return MatrixSeries(vals, _parse_index(df["t"]))


def series_to_csv(series: MatrixSeries, layout: str = "wide") -> str:
    T, d1, d2 = series.values.shape
    t = list(series.index) if series.index is not None else list(range(1, T + 1))
    if layout == "long":
        rows = [
            (t[n], i + 1, j + 1, series.values[n, i, j])
            for n in range(T) for j in range(d2) for i in range(d1)
        ]
        df = pd.DataFrame(rows, columns=["t", "row", "col", "value"])
    elif layout == "wide":
        names = [f"v_{i + 1}_{j + 1}" for j in range(d2) for i in range(d1)]
        df = pd.DataFrame(series.vectorized(), columns=names)
        df.insert(0, "t", t)
    else:
        raise ValueError(f"unknown layout {layout!r}")
    return df.to_csv(index=False, float_format="%.17g", lineterminator="\n")


def write_series(path, series: MatrixSeries, layout: str = "wide") -> None:
    atomic_write_text(path, series_to_csv(series, layout))
