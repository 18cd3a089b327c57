"""Dataset emission: CSV with round-trip float formatting plus a JSON sidecar.

Sidecars deliberately contain no wall-clock data, so identical inputs give
byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FrackixError


class DataIOError(FrackixError, OSError):
    category = "io"


@dataclass
class Dataset:
    columns: list
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"row {i} has {len(row)} entries, expected {width}")


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def emit_dataset(ds: Dataset, path) -> tuple[Path, Path]:
    """Write ``path`` as CSV and ``path`` with a ``.json`` suffix as the sidecar."""
    path = Path(path)
    sidecar = path.with_suffix(".json")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(ds.columns)
            for row in ds.rows:
                writer.writerow([format_value(v) for v in row])
        meta = dict(ds.metadata)
        meta["columns"] = list(ds.columns)
        meta["rows"] = len(ds.rows)
        sidecar.write_text(dumps_json(meta), encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot write {exc.filename or path}: {exc.strerror}") from None
    return path, sidecar


def write_report(obj, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_json(obj), encoding="utf-8")
    except OSError as exc:
        raise DataIOError(f"cannot write {path}: {exc.strerror}") from None
    return path


def read_long_csv(path, value_column: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a ``time, <position>, <value>`` long-format CSV into a (times, x, values) grid."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = np.array([[float(v) for v in row] for row in reader])
    except (OSError, StopIteration) as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from None
    if value_column not in header or len(header) != 3:
        raise DataIOError(f"{path}: expected columns time,<x>,{value_column}, got {header}")
    times = np.unique(data[:, 0])
    x = np.unique(data[:, 1])
    values = data[:, 2].reshape(times.size, x.size)
    return times, x, values
