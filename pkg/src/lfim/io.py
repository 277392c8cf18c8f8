"""Contour CSV files with a JSON metadata sidecar, plus small JSON/CSV writers.

Floats are written with ``repr`` so every value reads back bit-for-bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .engine import ContourTable, ParameterGrid


class ContourFormatError(ValueError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


def sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def _fmt(x) -> str:
    return repr(float(x))


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps_json(obj))


def write_rows(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_contour_csv(table: ContourTable, path) -> None:
    p = table.grid.ndim
    header = [f"theta_{j + 1}" for j in range(p)] + ["delta", "pi"]
    rows = (list(pt) + [d, q] for pt, d, q in zip(table.points, table.delta, table.pi))
    write_rows(path, header, rows)
    meta = dict(table.meta)
    meta["grid"] = table.grid.to_dict()
    write_json(meta, sidecar_path(path))


def _grid_from_points(points: np.ndarray) -> ParameterGrid:
    axes = tuple(np.unique(points[:, j]) for j in range(points.shape[1]))
    grid = ParameterGrid(axes)
    if grid.points.shape != points.shape or not np.array_equal(grid.points, points):
        raise ContourFormatError("grid points are not a lexicographic Cartesian product")
    return grid


def read_contour_csv(path) -> ContourTable:
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ContourFormatError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ContourFormatError("empty contour file", 1)
        p = len(header) - 2
        expected = [f"theta_{j + 1}" for j in range(p)] + ["delta", "pi"]
        if p < 1 or header != expected:
            raise ContourFormatError(f"header must be {','.join(expected) if p >= 1 else 'theta_1,...,delta,pi'}", 1)
        data = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 2:
                raise ContourFormatError(f"expected {p + 2} fields, got {len(row)}", lineno)
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise ContourFormatError(f"non-numeric field ({exc})", lineno) from exc
            if not all(math.isfinite(v) for v in vals):
                raise ContourFormatError("non-finite value", lineno)
            if not (0.0 < vals[p] <= 1.0 and 0.0 < vals[p + 1] <= 1.0):
                raise ContourFormatError("delta and pi must lie in (0, 1]", lineno)
            data.append(vals)
    if not data:
        raise ContourFormatError("contour file has no rows", 2)
    arr = np.array(data)
    points = arr[:, :p]

    meta = {}
    side = sidecar_path(path)
    if side.exists():
        try:
            meta = json.loads(side.read_text())
        except json.JSONDecodeError as exc:
            raise ContourFormatError(f"{side}: invalid JSON ({exc.msg})") from exc
    if "grid" in meta:
        grid = ParameterGrid.from_dict(meta["grid"])
        if grid.points.shape != points.shape or not np.array_equal(grid.points, points):
            raise ContourFormatError(f"rows do not match the grid recorded in {side.name}")
    else:
        grid = _grid_from_points(points)
    return ContourTable(grid, arr[:, p].copy(), arr[:, p + 1].copy(), meta)
