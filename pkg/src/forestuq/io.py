"""CSV ingestion and response standardization."""

from __future__ import annotations

import csv
import math
from dataclasses import replace

import numpy as np

from .forest import Dataset

MISSING = {"", "na", "nan", "null", "none", "?"}


class DataError(ValueError):
    """Raised for malformed or incomplete input files."""


def _parse_float(s):
    try:
        v = float(s)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_csv(path, target, task, like=None):
    """Read a headered CSV into a ``Dataset``.

    Numeric columns are kept as is. Any other feature column is one-hot
    encoded with its levels in first-appearance order, named
    ``<column>=<level>``. Classification targets become dense indices over
    their sorted unique values (numeric order when every label is a
    number). Missing cells are an error.

    Pass ``like`` (usually the training set) to encode query files with the
    same columns and label indices.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if target not in header:
            raise DataError(f"{path}: target column {target!r} not in header")
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{reader.line_num}: expected {len(header)} fields, "
                                f"got {len(row)}")
            cells = [c.strip() for c in row]
            for name, cell in zip(header, cells):
                if cell.lower() in MISSING:
                    raise DataError(f"{path}:{reader.line_num}: missing value in column "
                                    f"{name!r}")
            rows.append((reader.line_num, cells))
    if len(rows) < 2:
        raise DataError(f"{path}: need at least two data rows")

    columns = list(zip(*(cells for _, cells in rows)))
    t = header.index(target)
    if like is not None:
        return _encode_like(path, header, columns, rows, t, like)
    feats, names = [], []
    for j, name in enumerate(header):
        if j == t:
            continue
        col = columns[j]
        parsed = [_parse_float(c) for c in col]
        if all(v is not None for v in parsed):
            feats.append(np.array(parsed, dtype=np.float64))
            names.append(name)
            continue
        levels = list(dict.fromkeys(col))
        for level in levels:
            feats.append(np.array([c == level for c in col], dtype=np.float64))
            names.append(f"{name}={level}")
    if not feats:
        raise DataError(f"{path}: no feature columns")
    X = np.column_stack(feats)

    raw_y = columns[t]
    if task == "regression":
        y = []
        for (line, _), cell in zip(rows, raw_y):
            v = _parse_float(cell)
            if v is None:
                raise DataError(f"{path}:{line}: non-numeric response {cell!r}")
            y.append(v)
        return Dataset(X, np.array(y), "regression", names)
    if task != "classification":
        raise DataError(f"unknown task {task!r}")
    nums = [_parse_float(c) for c in raw_y]
    if all(v is not None for v in nums):
        uniq = sorted(set(nums))
        labels = [int(v) if float(v).is_integer() else v for v in uniq]
        index = {v: i for i, v in enumerate(uniq)}
        y = np.array([index[v] for v in nums])
    else:
        labels = sorted(set(raw_y))
        index = {v: i for i, v in enumerate(labels)}
        y = np.array([index[v] for v in raw_y])
    return Dataset(X, y, "classification", names, labels)


def _encode_like(path, header, columns, rows, t, like):
    by_name = {h: columns[j] for j, h in enumerate(header)}
    feats = []
    for name in like.feature_names:
        if name in by_name:
            parsed = [_parse_float(c) for c in by_name[name]]
            if any(v is None for v in parsed):
                raise DataError(f"{path}: column {name!r} is not numeric")
            feats.append(np.array(parsed, dtype=np.float64))
            continue
        base, _, level = name.partition("=")
        if base not in by_name:
            raise DataError(f"{path}: missing feature column {base!r}")
        feats.append(np.array([c == level for c in by_name[base]], dtype=np.float64))
    X = np.column_stack(feats)
    raw_y = columns[t]
    if like.task == "regression":
        y = []
        for (line, _), cell in zip(rows, raw_y):
            v = _parse_float(cell)
            if v is None:
                raise DataError(f"{path}:{line}: non-numeric response {cell!r}")
            y.append(v)
        return Dataset(X, np.array(y), "regression", list(like.feature_names))
    index = {str(v): i for i, v in enumerate(like.class_labels)}
    y = []
    for (line, _), cell in zip(rows, raw_y):
        key = cell
        num = _parse_float(cell)
        if key not in index and num is not None:
            key = str(int(num)) if num.is_integer() else str(num)
        if key not in index:
            raise DataError(f"{path}:{line}: unknown class label {cell!r}")
        y.append(index[key])
    return Dataset(X, np.array(y), "classification", list(like.feature_names),
                   list(like.class_labels))


def standardize_response(dataset, mean=None, sd=None):
    """Return ``(standardized dataset, mean, sd)``.

    Uses the population standard deviation (ddof=0). Pass ``mean``/``sd``
    to apply a transform fitted elsewhere, e.g. on the training split.
    """
    if dataset.task != "regression":
        raise ValueError("only regression responses are standardized")
    y = dataset.response
    if mean is None:
        mean = float(np.mean(y))
    if sd is None:
        sd = float(np.std(y))
    if not sd > 0:
        raise ValueError("response has zero variance; cannot standardize")
    return replace(dataset, response=(y - mean) / sd), mean, sd


def write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
