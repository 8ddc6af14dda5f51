"""Deterministic single-file container: named float64/int64 arrays + JSON meta.

Used for the prepared dataset and for model checkpoints.  Byte layout is
fixed (little-endian, sorted entry names, CRC-checked), so writing the same
logical content twice yields bitwise-identical files.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError, StoreIntegrityError

_MAGIC = b"FLXCONT"
_VERSION = 1

_KIND_JSON = 0
_KIND_F64 = 1
_KIND_I64 = 2


def write_container(path, meta: dict, arrays: dict[str, np.ndarray]):
    chunks = []
    entries = [("__meta__", _KIND_JSON,
                json.dumps(meta, sort_keys=True).encode("utf-8"))]
    for name in sorted(arrays):
        a = arrays[name]
        if a.dtype == np.float64:
            kind, payload = _KIND_F64, a.astype("<f8").tobytes()
        elif a.dtype == np.int64:
            kind, payload = _KIND_I64, a.astype("<i8").tobytes()
        else:
            raise FormatError(f"container arrays must be f64 or i64, got {a.dtype}")
        header = struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
        entries.append((name, kind, header + payload))
    for name, kind, payload in entries:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<BQ", kind, len(payload)))
        chunks.append(payload)
    body = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(_MAGIC + bytes([_VERSION]))
        fh.write(struct.pack("<I", len(entries)))
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body)))


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    buf = Path(path).read_bytes()
    if buf[:7] != _MAGIC:
        raise FormatError(f"{path}: not a flexcast container")
    if buf[7] != _VERSION:
        raise FormatError(f"{path}: unsupported container version {buf[7]}")
    (n_entries,) = struct.unpack_from("<I", buf, 8)
    body = buf[12:-4]
    (crc,) = struct.unpack_from("<I", buf, len(buf) - 4)
    if zlib.crc32(body) != crc:
        raise StoreIntegrityError(f"{path}: container checksum mismatch")
    meta: dict = {}
    arrays: dict[str, np.ndarray] = {}
    off = 0
    for _ in range(n_entries):
        (name_len,) = struct.unpack_from("<H", body, off)
        off += 2
        name = body[off:off + name_len].decode("utf-8")
        off += name_len
        kind, payload_len = struct.unpack_from("<BQ", body, off)
        off += 9
        payload = body[off:off + payload_len]
        off += payload_len
        if kind == _KIND_JSON:
            meta = json.loads(payload)
        else:
            ndim = payload[0]
            shape = struct.unpack_from(f"<{ndim}Q", payload, 1)
            data_off = 1 + 8 * ndim
            dtype = "<f8" if kind == _KIND_F64 else "<i8"
            arr = np.frombuffer(payload, dtype=dtype, offset=data_off).reshape(shape)
            arrays[name] = arr.astype(arr.dtype.newbyteorder("="))
    return meta, arrays
