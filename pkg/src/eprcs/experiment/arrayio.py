"""EPRA array files.

Layout: a 32-byte header followed by the data as little-endian float64 in
row-major order. The header holds the magic ``b"EPRA"``, the format
version, the rank and four dimension slots (unused slots are zero), all as
little-endian u32, then four zero bytes of padding.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from ..errors import MissingArtifact

MAGIC = b"EPRA"
VERSION = 1
MAX_RANK = 4
_HEADER = struct.Struct("<4sII4I4x")
assert _HEADER.size == 32


class ArrayFormatError(ValueError):
    pass


def encode(array) -> bytes:
    a = np.asarray(array)
    if np.iscomplexobj(a):
        raise ArrayFormatError("complex arrays must be split into real and imaginary parts first")
    if a.ndim > MAX_RANK:
        raise ArrayFormatError(f"rank {a.ndim} exceeds {MAX_RANK}")
    if any(d >= 2**32 for d in a.shape):
        raise ArrayFormatError("dimension does not fit in u32")
    dims = list(a.shape) + [0] * (MAX_RANK - a.ndim)
    header = _HEADER.pack(MAGIC, VERSION, a.ndim, *dims)
    return header + np.ascontiguousarray(a, dtype="<f8").tobytes()


def decode(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ArrayFormatError("file shorter than the header")
    magic, version, rank, *dims = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ArrayFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ArrayFormatError(f"unsupported version {version}")
    if rank > MAX_RANK:
        raise ArrayFormatError(f"bad rank {rank}")
    shape = tuple(dims[:rank])
    count = int(np.prod(shape, dtype=np.int64))
    body = data[_HEADER.size:]
    if len(body) != 8 * count:
        raise ArrayFormatError(f"expected {8 * count} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(shape).astype(np.float64)


def write_array(path, array) -> str:
    """Write ``array`` and return the sha256 of the file contents."""
    data = encode(array)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_array(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingArtifact(f"missing artifact {path.name} in {path.parent}")
    return decode(path.read_bytes())


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
