"""CSV and JSON file formats. All writes are atomic (temp file + rename)."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .germ import TabulatedGrid
from .grid import Partition


def _atomic_write(path: Path, text: str):
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


def format_float(x: float) -> str:
    return "%.17g" % x


def grid_csv_text(axes: Sequence[np.ndarray], values: np.ndarray) -> str:
    """Rows ``x1,...,xm,value`` in lexicographic grid-index order."""
    m = len(axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    cols = [g.ravel() for g in mesh] + [np.asarray(values).ravel()]
    lines = [",".join([f"x{k + 1}" for k in range(m)] + ["value"])]
    for row in zip(*cols):
        lines.append(",".join(format_float(v) for v in row))
    return "\n".join(lines) + "\n"


def write_grid_csv(path, axes, values):
    _atomic_write(path, grid_csv_text(axes, values))


def write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2) + "\n")


def read_grid_csv(path) -> TabulatedGrid:
    """Read node data written one row per node in lexicographic order."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}", key="germ.csv") from exc
    if not rows:
        raise ConfigError(f"{path} is empty", key="germ.csv")
    header = [h.strip() for h in rows[0]]
    m = len(header) - 1
    if m < 1 or header != [f"x{k + 1}" for k in range(m)] + ["value"]:
        raise ConfigError(f"{path}: header must be x1,...,xm,value", key="germ.csv")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}", key="germ.csv") from exc
    if data.ndim != 2 or data.shape[1] != m + 1:
        raise ConfigError(f"{path}: every row needs {m + 1} columns", key="germ.csv")
    nodes = [np.unique(data[:, k]) for k in range(m)]
    partition = Partition(tuple(nodes))
    expected = np.stack([g.ravel() for g in np.meshgrid(*nodes, indexing="ij")], axis=-1)
    if expected.shape != data[:, :m].shape or not np.array_equal(expected, data[:, :m]):
        raise ConfigError(f"{path}: rows must cover the full node grid in lexicographic order",
                          key="germ.csv")
    return TabulatedGrid(partition, data[:, m].reshape([n.size for n in nodes]))
