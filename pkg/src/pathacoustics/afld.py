"""Bit-exact binary field files.

Layout (all little-endian)::

    b"AFLD"  u8 version=1  u8 dim  u8 rank  u8 pad=0
    dim x u32   cell counts
    dim x f64   lengths
    payload     f64 values, row-major; vector fields store each component
                as a full raster, one after another
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .fields import Grid, ScalarField, VectorField

MAGIC = b"AFLD"
VERSION = 1


class FieldFormatError(ValueError):
    pass


class MalformedHeaderError(FieldFormatError):
    pass


class DimensionMismatchError(FieldFormatError):
    pass


class TruncatedPayloadError(FieldFormatError):
    pass


def encode_field(field) -> bytes:
    grid = field.grid
    rank = 1 if isinstance(field, VectorField) else 0
    header = MAGIC + struct.pack("<BBBB", VERSION, grid.dim, rank, 0)
    header += struct.pack(f"<{grid.dim}I", *grid.n)
    header += struct.pack(f"<{grid.dim}d", *grid.length)
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C")
    return header + payload


def decode_field(data: bytes, grid: Grid | None = None):
    """Parse AFLD bytes; optionally require a specific grid."""
    if len(data) < 8 or data[:4] != MAGIC:
        raise MalformedHeaderError("malformed header: bad magic bytes")
    version, dim, rank, pad = struct.unpack_from("<BBBB", data, 4)
    if version != VERSION:
        raise MalformedHeaderError(f"malformed header: unsupported version {version}")
    if dim not in (2, 3) or rank not in (0, 1) or pad != 0:
        raise MalformedHeaderError(f"malformed header: dim={dim} rank={rank} pad={pad}")
    hsize = 8 + 4 * dim + 8 * dim
    if len(data) < hsize:
        raise MalformedHeaderError("malformed header: header shorter than declared dimension")
    n = struct.unpack_from(f"<{dim}I", data, 8)
    length = struct.unpack_from(f"<{dim}d", data, 8 + 4 * dim)
    try:
        file_grid = Grid(n, length)
    except ValueError as exc:
        raise MalformedHeaderError(f"malformed header: {exc}") from exc
    if grid is not None and not grid.same_as(file_grid):
        raise DimensionMismatchError(f"dimension mismatch: file grid {file_grid}, expected {grid}")

    count = file_grid.size * (dim if rank else 1)
    payload = len(data) - hsize
    if payload < 8 * count:
        raise TruncatedPayloadError(
            f"truncated payload: expected {count} values, found {payload / 8:g}"
        )
    if payload > 8 * count:
        raise DimensionMismatchError(
            f"dimension mismatch: payload holds {payload / 8:g} values, header implies {count}"
        )
    values = np.frombuffer(data, dtype="<f8", count=count, offset=hsize).astype(float)
    if rank:
        return VectorField(file_grid, values.reshape(dim, *n))
    return ScalarField(file_grid, values.reshape(n))


def write_field(path, field) -> None:
    Path(path).write_bytes(encode_field(field))


def read_field(path, grid: Grid | None = None):
    return decode_field(Path(path).read_bytes(), grid)
