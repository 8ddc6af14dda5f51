"""Single-file subgraph store with random access by station id.

Layout:

    magic "FLXSGST" + version byte
    per record: u32 payload length | payload | u32 crc32(payload)
    index: u32 length | json payload | u32 crc32  (id -> record offset, k)
    tail:  u64 index offset | magic "FLXSGIDX"

get() seeks straight to the record offset; no scan. Records are verified
against their checksum on every read.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

from .errors import FormatError, StoreIntegrityError
from .graph import ProximityGraph, SubgraphRecord, khop_subgraph

_MAGIC = b"FLXSGST"
_VERSION = 1
_TAIL_MAGIC = b"FLXSGIDX"


def build_store(g: ProximityGraph, k: int, path) -> "SubgraphStore":
    """Extract the k-hop subgraph of every node and persist one record each."""
    path = Path(path)
    offsets: dict[str, int] = {}
    with open(path, "wb") as fh:
        fh.write(_MAGIC + bytes([_VERSION]))
        for sid in g.ids:
            rec = khop_subgraph(g, sid, k)
            payload = rec.to_bytes()
            offsets[sid] = fh.tell()
            fh.write(struct.pack("<I", len(payload)))
            fh.write(payload)
            fh.write(struct.pack("<I", zlib.crc32(payload)))
        index_offset = fh.tell()
        index = json.dumps({"k": k, "offsets": offsets}, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(index)))
        fh.write(index)
        fh.write(struct.pack("<I", zlib.crc32(index)))
        fh.write(struct.pack("<Q", index_offset))
        fh.write(_TAIL_MAGIC)
    return SubgraphStore(path)


class SubgraphStore:
    """Read-only handle over a store file.

    Record reads are positioned (os.pread), so one handle is safe to share
    across concurrent readers."""

    def __init__(self, path):
        self.path = Path(path)
        self._fd = os.open(self.path, os.O_RDONLY)
        size = os.fstat(self._fd).st_size
        head = os.pread(self._fd, 8, 0)
        if head[:7] != _MAGIC:
            raise FormatError(f"{self.path}: not a subgraph store")
        if head[7] != _VERSION:
            raise FormatError(f"{self.path}: unsupported store version {head[7]}")
        tail = os.pread(self._fd, 16, size - 16)
        if tail[8:] != _TAIL_MAGIC:
            raise FormatError(f"{self.path}: missing index tail")
        (index_offset,) = struct.unpack("<Q", tail[:8])
        index = json.loads(self._read_block(index_offset))
        self.k: int = index["k"]
        self._offsets: dict[str, int] = index["offsets"]

    def _read_block(self, offset: int) -> bytes:
        (length,) = struct.unpack("<I", os.pread(self._fd, 4, offset))
        payload = os.pread(self._fd, length, offset + 4)
        (crc,) = struct.unpack("<I", os.pread(self._fd, 4, offset + 4 + length))
        if zlib.crc32(payload) != crc:
            raise StoreIntegrityError(f"{self.path}: checksum mismatch")
        return payload

    def keys(self) -> list[str]:
        return list(self._offsets)

    def __len__(self):
        return len(self._offsets)

    def __contains__(self, station_id: str) -> bool:
        return station_id in self._offsets

    def get(self, station_id: str) -> SubgraphRecord:
        try:
            offset = self._offsets[station_id]
        except KeyError:
            raise KeyError(f"no subgraph record for station: {station_id}") from None
        return SubgraphRecord.from_bytes(self._read_block(offset))

    def load_all(self) -> dict[str, SubgraphRecord]:
        """Materialize every record; used by training, where the store is hot."""
        return {sid: self.get(sid) for sid in self._offsets}

    def close(self):
        os.close(self._fd)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
