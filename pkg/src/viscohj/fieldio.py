"""Field serialisation and deterministic JSON/CSV writers.

CSV layout: one row per grid point in row-major order; columns ``i0..i{d-1}``
hold the integer multi-index, followed by ``value`` for real fields or
``value_re, value_im`` for complex fields. Floats use ``%.17g`` so a round
trip is exact.

Binary layout (little-endian): 4-byte magic ``VHJF``, uint8 format version,
uint8 d, uint8 dtype code (0 = float64, 1 = complex128), uint8 padding,
uint32 n_x, then the n_x^d values in row-major order.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from .grid import Field, Grid, GridError

MAGIC = b"VHJF"
_HEADER = struct.Struct("<4sBBBBI")
_VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


def fmt(x) -> str:
    return "%.17g" % x


def field_to_csv(f: Field, path) -> None:
    g = f.grid
    idx = np.indices(g.shape).reshape(g.d, -1).T
    header = [f"i{k}" for k in range(g.d)]
    header += ["value_re", "value_im"] if f.is_complex else ["value"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row, v in zip(idx, f.flat()):
        vals = [fmt(v.real), fmt(v.imag)] if f.is_complex else [fmt(v)]
        w.writerow([str(i) for i in row] + vals)
    Path(path).write_text(buf.getvalue())


def field_from_csv(path) -> Field:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = sum(1 for h in header if h.startswith("i"))
    n_x = round(len(body) ** (1.0 / d))
    g = Grid(d, n_x)
    vals = np.zeros(g.shape, dtype=complex if "value_im" in header else float)
    for r in body:
        idx = tuple(int(i) for i in r[:d])
        vals[idx] = complex(float(r[d]), float(r[d + 1])) if "value_im" in header else float(r[d])
    return Field(g, vals)


def field_to_bytes(f: Field) -> bytes:
    code = 1 if f.is_complex else 0
    head = _HEADER.pack(MAGIC, _VERSION, f.grid.d, code, 0, f.grid.n_x)
    return head + np.ascontiguousarray(f.flat(), dtype=_DTYPES[code]).tobytes()


def field_from_bytes(data: bytes) -> Field:
    magic, version, d, code, _, n_x = _HEADER.unpack_from(data)
    if magic != MAGIC or version != _VERSION or code not in _DTYPES:
        raise GridError("not a field file")
    g = Grid(d, n_x)
    vals = np.frombuffer(data, dtype=_DTYPES[code], offset=_HEADER.size, count=g.size)
    return Field(g, vals.astype(vals.dtype.newbyteorder("=")))


def write_field(f: Field, path) -> None:
    Path(path).write_bytes(field_to_bytes(f))


def read_field(path) -> Field:
    return field_from_bytes(Path(path).read_bytes())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed indentation, repr-exact floats."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def content_hash(obj) -> str:
    return hashlib.sha256(dumps(obj).encode()).hexdigest()


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj))


def write_table(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in r])
    Path(path).write_text(buf.getvalue())
