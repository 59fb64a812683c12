"""File outputs: legacy ASCII VTK snapshots, CSV tables and JSON reports."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .mesh import MeshDescriptor

VTK_FLOAT = "%.10g"


class OutputError(OSError):
    """Raised for unwritable or unreadable output paths; the message names the path."""


def _open(path, mode):
    path = Path(path)
    try:
        if "w" in mode:
            path.parent.mkdir(parents=True, exist_ok=True)
        return path.open(mode, newline="" if path.suffix == ".csv" else None)
    except OSError as exc:
        raise OutputError(f"cannot open {path} for {'writing' if 'w' in mode else 'reading'}: {exc.strerror or exc}") from None


def write_vtk(path, mesh: MeshDescriptor, point_data: dict, cell_data: dict, title: str = "egmcl") -> Path:
    """Legacy VTK 3.0 STRUCTURED_GRID with scalar point (vertex) and cell arrays."""
    nvx, nvy = mesh.nx + 1, mesh.ny + 1
    xs, ys = mesh.vertex_coordinates()
    X, Y = np.meshgrid(xs, ys)
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET STRUCTURED_GRID", f"DIMENSIONS {nvx} {nvy} 1", f"POINTS {nvx * nvy} double"]
    lines.extend(f"{VTK_FLOAT % x} {VTK_FLOAT % y} 0" for x, y in zip(X.ravel(), Y.ravel()))

    def block(kind, count, arrays, shape):
        if not arrays:
            return
        lines.append(f"{kind} {count}")
        for name, values in arrays.items():
            values = np.asarray(values, dtype=float)
            if values.shape != shape:
                raise ValueError(f"{kind} array {name!r} has shape {values.shape}, expected {shape}")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(VTK_FLOAT % v for v in values.ravel())

    block("POINT_DATA", nvx * nvy, point_data, mesh.vertex_shape)
    block("CELL_DATA", mesh.nx * mesh.ny, cell_data, mesh.cell_shape)
    path = Path(path)
    with _open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_vtk(path) -> dict:
    """Reader for files from :func:`write_vtk`.

    Returns ``{"dimensions": (nx+1, ny+1), "points": (N, 3), "point_data": {...},
    "cell_data": {...}}`` with data arrays shaped like the mesh arrays.
    """
    with _open(path, "r") as fh:
        tokens = fh.read().split("\n")
    if not tokens or not tokens[0].startswith("# vtk DataFile"):
        raise ValueError(f"{path}: not a legacy VTK file")
    words = " ".join(tokens[2:]).split()
    out = {"point_data": {}, "cell_data": {}}
    k = 0
    section = None
    dims = None
    while k < len(words):
        w = words[k]
        if w == "DIMENSIONS":
            dims = (int(words[k + 1]), int(words[k + 2]))
            out["dimensions"] = dims
            k += 4
        elif w == "POINTS":
            n = int(words[k + 1])
            out["points"] = np.array(words[k + 3:k + 3 + 3 * n], dtype=float).reshape(n, 3)
            k += 3 + 3 * n
        elif w in ("POINT_DATA", "CELL_DATA"):
            section = w
            k += 2
        elif w == "SCALARS":
            name = words[k + 1]
            k += 4
            if words[k] == "LOOKUP_TABLE":
                k += 2
            nvx, nvy = dims
            shape = (nvy, nvx) if section == "POINT_DATA" else (nvy - 1, nvx - 1)
            n = shape[0] * shape[1]
            arr = np.array(words[k:k + n], dtype=float).reshape(shape)
            out["point_data" if section == "POINT_DATA" else "cell_data"][name] = arr
            k += n
        else:
            k += 1
    return out


def write_csv(path, rows: list, columns: list | None = None) -> Path:
    """CSV with a header row; ``rows`` are dicts, missing entries are left empty."""
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(c for c in r if c not in columns)
    path = Path(path)
    with _open(path, "w") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for r in rows:
            writer.writerow({c: _csv_value(r.get(c)) for c in columns})
    return path


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_csv(path) -> list:
    with _open(path, "r") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data: dict) -> Path:
    """Sorted, indented JSON; non-finite floats become null."""
    path = Path(path)
    with _open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
