"""
Versioned binary containers.

Layout::

    magic      8 bytes (kind + format version, e.g. b"MDCLSF01")
    length     u32 little-endian, size of the JSON header
    header     UTF-8 JSON object; header["blobs"] = [[name, dtype, shape], ...]
    blobs      raw array bytes, in header order

Arrays are stored with explicit little-endian dtypes (``<f4``) or bytes (``|u1``),
so files are identical whatever the host byte order.
"""
import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from multidetect.core.errors import StorageError

MAGIC_SIZE = 8
_LENGTH = struct.Struct("<I")
_ALLOWED_DTYPES = {"<f4", "|u1", "<i8"}


def _canonical(array: np.ndarray) -> np.ndarray:
    if array.dtype.kind == "f":
        return np.ascontiguousarray(array, dtype="<f4")
    if array.dtype == np.uint8:
        return np.ascontiguousarray(array, dtype="|u1")
    if array.dtype.kind in "iu":
        return np.ascontiguousarray(array, dtype="<i8")
    raise StorageError(f"Unsupported dtype for container blob: {array.dtype}")


def encode_container(magic: bytes, header: Mapping[str, Any], blobs: Mapping[str, np.ndarray]) -> bytes:
    """Serialize a header and ordered blobs into container bytes."""
    if len(magic) != MAGIC_SIZE:
        raise StorageError(f"Magic must be {MAGIC_SIZE} bytes, got {magic!r}")
    arrays = {name: _canonical(np.asarray(a)) for name, a in blobs.items()}
    full_header = dict(header)
    full_header["blobs"] = [[name, a.dtype.str, list(a.shape)] for name, a in arrays.items()]
    header_bytes = json.dumps(full_header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [magic, _LENGTH.pack(len(header_bytes)), header_bytes]
    parts.extend(a.tobytes(order="C") for a in arrays.values())
    return b"".join(parts)


def decode_container(data: bytes, magic: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Parse container bytes; returns (header, blobs) with blobs in header order."""
    if data[:MAGIC_SIZE] != magic:
        raise StorageError(f"Bad magic: expected {magic!r}, got {data[:MAGIC_SIZE]!r}")
    offset = MAGIC_SIZE
    if len(data) < offset + _LENGTH.size:
        raise StorageError("Truncated container header")
    (length,) = _LENGTH.unpack_from(data, offset)
    offset += _LENGTH.size
    try:
        header = json.loads(data[offset:offset + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise StorageError(f"Corrupt container header: {e}")
    offset += length

    blobs: Dict[str, np.ndarray] = {}
    for name, dtype, shape in header.pop("blobs", []):
        if dtype not in _ALLOWED_DTYPES:
            raise StorageError(f"Unsupported blob dtype {dtype} for {name}")
        dt = np.dtype(dtype)
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = count * dt.itemsize
        if offset + nbytes > len(data):
            raise StorageError(f"Truncated blob '{name}'")
        blobs[name] = np.frombuffer(data, dtype=dt, count=count, offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise StorageError(f"{len(data) - offset} trailing bytes after last blob")
    return header, blobs


def write_atomic(path: Path, payload: bytes) -> None:
    """Write through a temp file + rename so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_container(path: Path, magic: bytes, header: Mapping[str, Any], blobs: Mapping[str, np.ndarray]) -> None:
    write_atomic(path, encode_container(magic, header, blobs))


def load_container(path: Path, magic: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    path = Path(path)
    if not path.exists():
        raise StorageError(f"Container not found: {path}")
    return decode_container(path.read_bytes(), magic)