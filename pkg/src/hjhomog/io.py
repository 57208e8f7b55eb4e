"""CSV and JSON emission shared by every stage.

Floats are written with ``repr`` so that a 64-bit value read back with
``float()`` is bit-identical.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, (np.integer,)):
        return str(int(value))
    if isinstance(value, (np.bool_, bool)):
        return "true" if value else "false"
    return str(value)


def sibling(stem, suffix: str) -> Path:
    """``stem`` with ``suffix`` appended; unlike ``with_suffix`` dots in the stem survive."""
    stem = Path(stem)
    return stem.with_name(stem.name + suffix)


def write_csv(path, names, columns) -> Path:
    """Write equally long columns under the header ``names``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [np.asarray(c).ravel() if not isinstance(c, list) else c for c in columns]
    n = len(columns[0]) if columns else 0
    if any(len(c) != n for c in columns):
        raise ValueError("CSV columns have different lengths")
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for i in range(n):
            writer.writerow([_fmt(c[i]) for c in columns])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if math.isinf(value) or math.isnan(value):
            return _fmt(value)
        return value
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path
