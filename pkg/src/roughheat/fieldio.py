"""On-disk formats: field files, canonical JSON and plot-data text.

A field file is a JSON header plus a sibling ``.bin`` file holding
little-endian float64 values in row-major cell order, one time slab after
another. The header records the grid and a checksum of the payload.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .grid import SpaceTimeGrid, make_grid

__all__ = [
    "FIELD_SCHEMA",
    "FieldFormatError",
    "FieldFile",
    "write_field",
    "read_field",
    "grid_descriptor",
    "grid_from_descriptor",
    "to_jsonable",
    "canonical_json",
    "write_columns",
]

FIELD_SCHEMA = 1
_DTYPE = np.dtype("<f8")


class FieldFormatError(ValueError):
    pass


def grid_descriptor(grid: SpaceTimeGrid) -> dict:
    return {
        "n": grid.n,
        "box": [list(map(float, b)) for b in grid.box],
        "h": float(grid.h),
        "T": float(grid.T),
        "dt": float(grid.dt),
    }


def grid_from_descriptor(desc: dict) -> SpaceTimeGrid:
    return make_grid(int(desc["n"]), [tuple(b) for b in desc["box"]], float(desc["h"]), float(desc["T"]), float(desc["dt"]))


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become the strings ``inf``, ``-inf``, ``nan``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isfinite(f):
            return f
        return "nan" if math.isnan(f) else ("inf" if f > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj) -> str:
    """Sorted keys, no whitespace: identical inputs give identical bytes."""
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


class FieldFile:
    """A loaded field: header dict plus values of shape ``(slabs, *grid.shape)``."""

    def __init__(self, header: dict, values: np.ndarray):
        self.header = header
        self.values = values

    @property
    def grid(self) -> SpaceTimeGrid:
        return grid_from_descriptor(self.header["grid"])

    @property
    def first_step(self) -> int:
        return int(self.header.get("first_step", 0))


def write_field(path, values: np.ndarray, grid: SpaceTimeGrid, name: str, first_step: int = 0, meta: dict | None = None) -> Path:
    """Write ``values`` (one slab of ``grid.shape`` or a stack of slabs) as header plus binary."""
    path = Path(path)
    arr = np.asarray(values, dtype=float)
    if arr.shape == grid.shape:
        arr = arr[None]
    if arr.shape[1:] != grid.shape:
        raise FieldFormatError(f"values of shape {arr.shape} do not fit grid {grid.shape}")
    raw = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
    bin_path = path.with_suffix(".bin")
    header = {
        "schema": FIELD_SCHEMA,
        "name": name,
        "grid": grid_descriptor(grid),
        "dims": list(grid.shape),
        "slabs": int(arr.shape[0]),
        "first_step": int(first_step),
        "data": bin_path.name,
        "dtype": "float64-le",
        "grid_hash": grid.hash,
        "data_sha256": hashlib.sha256(raw).hexdigest(),
        "meta": meta or {},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    bin_path.write_bytes(raw)
    path.write_text(canonical_json(header) + "\n")
    return path


def read_field(path) -> FieldFile:
    path = Path(path)
    try:
        header = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FieldFormatError(f"{path}: unreadable header ({exc})") from None
    for key in ("schema", "grid", "dims", "slabs", "data", "data_sha256"):
        if key not in header:
            raise FieldFormatError(f"{path}: header lacks {key!r}")
    if header["schema"] != FIELD_SCHEMA:
        raise FieldFormatError(f"{path}: unsupported schema {header['schema']}")
    raw = (path.parent / header["data"]).read_bytes()
    if hashlib.sha256(raw).hexdigest() != header["data_sha256"]:
        raise FieldFormatError(f"{path}: payload checksum mismatch")
    shape = (int(header["slabs"]), *map(int, header["dims"]))
    values = np.frombuffer(raw, dtype=_DTYPE)
    if values.size != int(np.prod(shape)):
        raise FieldFormatError(f"{path}: payload has {values.size} values, header implies {shape}")
    return FieldFile(header, values.reshape(shape).astype(float))


def write_columns(path, columns, header: str = "") -> Path:
    """Whitespace-separated numeric columns, one row per sample."""
    path = Path(path)
    data = np.column_stack([np.asarray(c, dtype=float).ravel() for c in columns])
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, data, fmt="%.17g", header=header)
    return path
