"""Reading and writing ScalarFields.

A file starts with one text header line

    n, shape..., spacing..., origin..., topology

followed by row-major float64 values: raw little-endian bytes, or one value
per line when the path ends in ``.csv``.
"""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .fields import GridDomain, ScalarField


class FieldFormatError(ValueError):
    pass


def parse_header(line: str) -> GridDomain:
    parts = [p.strip() for p in line.strip().split(",")]
    try:
        n = int(parts[0])
        k = 2 * n
        if len(parts) != 1 + 3 * k + 1:
            raise FieldFormatError(f"header has {len(parts)} fields, expected {3 * k + 2}")
        shape = tuple(int(s) for s in parts[1:1 + k])
        spacing = tuple(float(s) for s in parts[1 + k:1 + 2 * k])
        origin = tuple(float(s) for s in parts[1 + 2 * k:1 + 3 * k])
        return GridDomain(n, shape, spacing, origin, parts[-1])
    except (IndexError, ValueError) as exc:
        if isinstance(exc, FieldFormatError):
            raise
        raise FieldFormatError(f"bad field header {line!r}: {exc}") from exc


def _is_csv(path) -> bool:
    return str(path).lower().endswith(".csv")


def dumps(field: ScalarField, csv: bool = False) -> bytes:
    head = (field.domain.header() + "\n").encode()
    if csv:
        buf = io.StringIO()
        np.savetxt(buf, field.values.reshape(-1), fmt="%.17g")
        return head + buf.getvalue().encode()
    return head + field.values.astype("<f8").tobytes(order="C")


def loads(data: bytes, csv: bool = False) -> ScalarField:
    nl = data.find(b"\n")
    if nl < 0:
        raise FieldFormatError("missing header line")
    domain = parse_header(data[:nl].decode())
    body = data[nl + 1:]
    count = int(np.prod(domain.shape))
    if csv:
        vals = np.loadtxt(io.StringIO(body.decode()), dtype=float, ndmin=1)
    else:
        if len(body) != 8 * count:
            raise FieldFormatError(f"expected {8 * count} bytes of data, found {len(body)}")
        vals = np.frombuffer(body, dtype="<f8")
    if vals.size != count:
        raise FieldFormatError(f"expected {count} values, found {vals.size}")
    return ScalarField(domain, vals.reshape(domain.shape).astype(float))


def save_field(path, field: ScalarField) -> None:
    Path(path).write_bytes(dumps(field, csv=_is_csv(path)))


def load_field(path) -> ScalarField:
    return loads(Path(path).read_bytes(), csv=_is_csv(path))
