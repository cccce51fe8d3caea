"""Fused-feature CSV files: ``r_E,r_h,r_L,r_EU,r_LU,r_EV,r_LV,mu_ssim[,mos]``.

``pred`` and ``kl_proxy`` columns are tolerated so predictions and diagnostics
can be appended to the same table. Any other column is a schema error.
"""

from __future__ import annotations

import csv
import math
from typing import Dict, List, Optional, Sequence

import numpy as np

from rrvqa.errors import SchemaError
from rrvqa.fusion import FUSED_NAMES
from rrvqa.gbt import TrainingSet

OPTIONAL_COLUMNS = ("kl_proxy", "mos", "pred")


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.9g}"


def read_table(path, required: Sequence[str] = FUSED_NAMES,
               allowed: Sequence[str] = FUSED_NAMES + OPTIONAL_COLUMNS) -> Dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    header = [h.strip() for h in header]
    for name in header:
        if name not in allowed:
            raise SchemaError(f"{path}: unexpected column {name!r}")
    if len(set(header)) != len(header):
        raise SchemaError(f"{path}: duplicate column names")
    for name in required:
        if name not in header:
            raise SchemaError(f"{path}: missing column {name!r}")
    cols: Dict[str, List[float]] = {h: [] for h in header}
    for line, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        for h, cell in zip(header, row):
            try:
                v = float(cell)
            except ValueError:
                raise SchemaError(f"{path}:{line}: column {h!r} is not numeric: {cell!r}") from None
            if not math.isfinite(v):
                raise SchemaError(f"{path}:{line}: column {h!r} is not finite")
            cols[h].append(v)
    return {h: np.asarray(v, dtype=np.float64) for h, v in cols.items()}


def feature_matrix(table: Dict[str, np.ndarray]) -> np.ndarray:
    return np.column_stack([table[name] for name in FUSED_NAMES])


def read_training_set(path) -> TrainingSet:
    table = read_table(path, required=FUSED_NAMES + ("mos",))
    return TrainingSet(feature_matrix(table), table["mos"])


def write_table(path, columns: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_columns(path, table: Dict[str, np.ndarray], order: Optional[Sequence[str]] = None) -> None:
    names = list(order or table.keys())
    n = len(table[names[0]]) if names else 0
    write_table(path, names, [[table[c][i] for c in names] for i in range(n)])
