"""CSV and JSON input/output."""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .errors import DataError
from .gp import Dataset, duplicate_rows

DATA_COLUMNS = ("x", "y", "t", "value")


def day_of_year_to_t(day):
    """Map day-of-year 1..365 to [0, 1] via ``(day - 1) / 364``."""
    return (np.asarray(day, dtype=float) - 1.0) / 364.0


def read_table(path, required, optional=()):
    """Read a headered numeric CSV; returns ``{column: float array}``.

    Every problem (missing columns, bad numbers) is reported with its row.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = [c for c in (*required, *optional) if c in header]
        pos = {c: header.index(c) for c in cols}
        rows, errors = {c: [] for c in cols}, []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not v.strip() for v in row):
                continue
            for c in cols:
                try:
                    v = float(row[pos[c]])
                    if not math.isfinite(v):
                        raise ValueError
                    rows[c].append(v)
                except (ValueError, IndexError):
                    val = row[pos[c]] if pos[c] < len(row) else ""
                    errors.append(f"row {lineno}: column {c!r} value {val!r} is not a finite number")
        if errors:
            raise DataError(f"{path}: " + "; ".join(errors[:20])
                            + (f"; ... {len(errors) - 20} more" if len(errors) > 20 else ""))
    out = {c: np.array(v) for c, v in rows.items()}
    if len(out[required[0]]) == 0:
        raise DataError(f"{path}: no data rows")
    return out


def read_dataset(path, allow_duplicates=False, scale_time=None) -> Dataset:
    """Read columns x, y, t, value. Duplicate (x, y, t) rows are rejected
    unless ``allow_duplicates`` (a nugget is configured)."""
    tab = read_table(path, DATA_COLUMNS)
    t = tab["t"] if scale_time is None else scale_time(tab["t"])
    pts = np.column_stack([tab["x"], tab["y"], t])
    if not allow_duplicates:
        dup = duplicate_rows(pts)
        if dup:
            raise DataError(f"{path}: duplicate (x, y, t) at row(s) "
                            f"{', '.join(str(i + 2) for i in dup[:20])}; configure a nugget "
                            "to allow repeated measurements")
    return Dataset(pts, tab["value"])


def read_points(path, scale_time=None):
    """Read target points (columns x, y, t; a value column is returned if present)."""
    tab = read_table(path, ("x", "y", "t"), ("value",))
    t = tab["t"] if scale_time is None else scale_time(tab["t"])
    return np.column_stack([tab["x"], tab["y"], t]), tab.get("value")


def write_dataset(data: Dataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DATA_COLUMNS)
        for p, v in zip(data.points, data.values):
            w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[-1])),
                        repr(float(v))])


def write_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
