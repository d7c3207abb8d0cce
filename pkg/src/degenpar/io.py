"""Deterministic writers and the CSV field reader.

Floats are written in shortest round-trip form (``repr``), which is enough
digits to recover every double exactly; lines end in ``\\n`` everywhere.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import yaml

from .fields import TableField
from .mesh import Mesh


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_columns(path: Path, cols: dict) -> None:
    keys = list(cols)
    write_csv(path, keys, zip(*(cols[k] for k in keys)))


def write_trajectory(path: Path, traj) -> None:
    """Long form: one ``t, node, value`` row per node and time level."""
    def rows():
        for t, u in zip(traj.times, traj.values):
            for k, v in enumerate(u.ravel()):
                yield t, k, v
    write_csv(path, ["t", "node", "value"], rows())


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def write_json(path: Path, obj) -> None:
    with open(path, "w", newline="") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_yaml(path: Path, obj) -> None:
    with open(path, "w", newline="") as fh:
        yaml.safe_dump(_plain(obj), fh, sort_keys=True, default_flow_style=False)


def read_field_csv(path, mesh: Mesh) -> TableField:
    """Nodal values from CSV.

    Columns are ``node, value`` or coordinates ``x0[, x1, x2], value``; an
    optional ``t`` column gives several time levels (every level must list
    every node).  Coordinates are snapped to the nearest mesh node.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = [c.strip() for c in (reader.fieldnames or [])]
        data = [{k.strip(): v for k, v in row.items()} for row in reader]
    if "value" not in cols:
        raise ValueError(f"{path}: missing 'value' column")
    if "node" in cols:
        nodes = np.array([int(r["node"]) for r in data])
    else:
        axes = [f"x{i}" for i in range(mesh.ndim)]
        if not all(a in cols for a in axes):
            raise ValueError(f"{path}: need a 'node' column or coordinate columns {axes}")
        idx = [np.rint(np.array([float(r[a]) for r in data]) / h).astype(int)
               for a, h in zip(axes, mesh.spacing)]
        for i, n in zip(idx, mesh.shape):
            if np.any((i < 0) | (i >= n)):
                raise ValueError(f"{path}: coordinates outside the mesh")
        nodes = np.ravel_multi_index(idx, mesh.shape)
    if np.any((nodes < 0) | (nodes >= mesh.size)):
        raise ValueError(f"{path}: node index outside the mesh")
    vals = np.array([float(r["value"]) for r in data])
    if "t" not in cols:
        out = np.full(mesh.size, np.nan)
        out[nodes] = vals
        if np.isnan(out).any():
            raise ValueError(f"{path}: {int(np.isnan(out).sum())} nodes have no value")
        return TableField(out.reshape(mesh.shape))
    ts = np.array([float(r["t"]) for r in data])
    levels = np.unique(ts)
    table = np.full((levels.size, mesh.size), np.nan)
    table[np.searchsorted(levels, ts), nodes] = vals
    if np.isnan(table).any():
        raise ValueError(f"{path}: incomplete time levels")
    return TableField(table, levels)
