"""Persistence: WMS1 snapshots, CSV series and JSON metadata.

A WMS1 file is a 4-byte little-endian unsigned header length, a UTF-8 JSON
header, then u and udot as contiguous little-endian float64 arrays.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .discrete_ops import FieldPair, RadialGrid

MAGIC = "WMS1"
_F64 = np.dtype("<f8")


class SnapshotFormatError(ValueError):
    pass


def write_snapshot(path, pair: FieldPair, k: int, J: int, t: float) -> None:
    head = {"magic": MAGIC, "k": int(k), "J": int(J), "t": float(t),
            "grid": pair.grid.header(), "endianness": "little"}
    blob = json.dumps(head, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(pair.u, dtype=_F64).tobytes())
        fh.write(np.ascontiguousarray(pair.udot, dtype=_F64).tobytes())


def read_snapshot(path) -> tuple[dict, FieldPair]:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise SnapshotFormatError("file too short")
    (m,) = struct.unpack_from("<I", data, 0)
    try:
        head = json.loads(data[4:4 + m].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotFormatError(f"bad header: {exc}") from None
    if head.get("magic") != MAGIC or head.get("endianness") != "little":
        raise SnapshotFormatError("not a little-endian WMS1 file")
    g = head["grid"]
    n = int(g["n"])
    payload = data[4 + m:]
    if len(payload) != 16 * n:
        raise SnapshotFormatError(f"payload has {len(payload)} bytes, expected {16 * n}")
    arr = np.frombuffer(payload, dtype=_F64).astype(float)
    grid = RadialGrid.from_header(g["kind"], g["r_min"], g["r_max"], n)
    return head, FieldPair(grid, arr[:n].copy(), arr[n:].copy())


def fmt(x) -> str:
    return "%.17g" % x


def write_csv(path, names, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    # repr of a Python float is the shortest round-tripping form
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))
