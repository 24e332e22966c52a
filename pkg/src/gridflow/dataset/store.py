"""Partition file with a fixed-width offset index for on-demand loading.

Layout (all integers little-endian)::

    header   magic "GFPARTS\\0" | u32 version | u64 count
    index    count x (u64 partition_id, u64 record offset)
    records  u32 length | payload

Strings are u32 length-prefixed UTF-8.
"""

from __future__ import annotations

import struct
from pathlib import Path

from ..errors import CorruptPartitionFile, UnknownPartitionId
from ..fsutil import atomic_writer
from .model import INVALID, VALID, Partition

MAGIC = b"GFPARTS\0"
VERSION = 1
_HEADER = struct.Struct("<8sIQ")
_INDEX = struct.Struct("<QQ")
_U32 = struct.Struct("<I")
_FIXED = struct.Struct("<QBqq")
_I64 = struct.Struct("<q")


def _pack_str(out: list, text: str) -> None:
    data = text.encode("utf-8")
    out.append(_U32.pack(len(data)))
    out.append(data)


def encode_partition(part: Partition) -> bytes:
    out = [_FIXED.pack(part.partition_id, 1 if part.state == VALID else 0, part.skip_units, part.num_units)]
    _pack_str(out, part.dataset)
    _pack_str(out, part.block_id)
    _pack_str(out, part.nickname)
    out.append(_U32.pack(len(part.file_urls)))
    for url in part.file_urls:
        _pack_str(out, url)
    out.append(_U32.pack(len(part.file_units)))
    for units in part.file_units:
        out.append(_I64.pack(units))
    if part.locations is None:
        out.append(b"\0")
    else:
        out.append(b"\1" + _U32.pack(len(part.locations)))
        for site in part.locations:
            _pack_str(out, site)
    out.append(_U32.pack(len(part.metadata)))
    for key, value in part.metadata.items():
        _pack_str(out, key)
        _pack_str(out, value)
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptPartitionFile("partition record truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def u32(self) -> int:
        return self.unpack(_U32)[0]

    def string(self) -> str:
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptPartitionFile("invalid UTF-8 in partition record") from None


def decode_partition(data: bytes) -> Partition:
    rd = _Reader(data)
    pid, state, skip, num = rd.unpack(_FIXED)
    dataset = rd.string()
    block_id = rd.string()
    nickname = rd.string()
    urls = [rd.string() for _ in range(rd.u32())]
    file_units = [rd.unpack(_I64)[0] for _ in range(rd.u32())]
    flag = rd.take(1)
    locations = None
    if flag == b"\1":
        locations = [rd.string() for _ in range(rd.u32())]
    elif flag != b"\0":
        raise CorruptPartitionFile("bad location flag")
    metadata = {}
    for _ in range(rd.u32()):
        key = rd.string()
        metadata[key] = rd.string()
    if rd.pos != len(data):
        raise CorruptPartitionFile("trailing bytes in partition record")
    return Partition(pid, dataset, block_id, urls, skip, num, locations, metadata,
                     VALID if state else INVALID, file_units, nickname)


def store_partitions(parts, path) -> None:
    """Write ``parts`` (partition ids strictly increasing) atomically."""
    records = [encode_partition(p) for p in parts]
    ids = [p.partition_id for p in parts]
    if any(b <= a for a, b in zip(ids, ids[1:])):
        raise ValueError("partition ids must be strictly increasing")
    offset = _HEADER.size + _INDEX.size * len(records)
    with atomic_writer(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(records)))
        index = []
        for pid, rec in zip(ids, records):
            index.append(_INDEX.pack(pid, offset))
            offset += _U32.size + len(rec)
        fh.write(b"".join(index))
        for rec in records:
            fh.write(_U32.pack(len(rec)))
            fh.write(rec)


class PartitionStore:
    """Random-access reader; ``bytes_read`` counts bytes pulled from disk."""

    def __init__(self, path):
        self.path = Path(path)
        self.bytes_read = 0
        try:
            self._fh = open(self.path, "rb", buffering=0)
        except FileNotFoundError:
            raise CorruptPartitionFile(f"partition file missing: {self.path}") from None
        magic, version, count = self._unpack_at(0, _HEADER)
        if magic != MAGIC or version != VERSION:
            self.close()
            raise CorruptPartitionFile(f"{self.path}: not a partition file")
        self.count = count
        self._size = self.path.stat().st_size
        if _HEADER.size + count * _INDEX.size > self._size:
            self.close()
            raise CorruptPartitionFile(f"{self.path}: truncated index")

    def _read_at(self, offset: int, n: int) -> bytes:
        self._fh.seek(offset)
        data = self._fh.read(n)
        self.bytes_read += len(data)
        if len(data) != n:
            raise CorruptPartitionFile(f"{self.path}: unexpected end of file")
        return data

    def _unpack_at(self, offset: int, st: struct.Struct):
        return st.unpack(self._read_at(offset, st.size))

    def _index(self, i: int):
        return self._unpack_at(_HEADER.size + i * _INDEX.size, _INDEX)

    def _record(self, offset: int) -> Partition:
        (length,) = self._unpack_at(offset, _U32)
        if offset + _U32.size + length > self._size:
            raise CorruptPartitionFile(f"{self.path}: record exceeds file size")
        return decode_partition(self._read_at(offset + _U32.size, length))

    def load(self, partition_id: int) -> Partition:
        lo, hi = 0, self.count - 1
        if self.count:
            # ids are usually dense: probe the direct slot first
            first_id, _ = self._index(0)
            guess = partition_id - first_id
            if 0 <= guess < self.count:
                pid, offset = self._index(guess)
                if pid == partition_id:
                    return self._record(offset)
        while lo <= hi:
            mid = (lo + hi) // 2
            pid, offset = self._index(mid)
            if pid == partition_id:
                return self._record(offset)
            if pid < partition_id:
                lo = mid + 1
            else:
                hi = mid - 1
        raise UnknownPartitionId(partition_id)

    def __iter__(self):
        if not self.count:
            return
        start = _HEADER.size + self.count * _INDEX.size
        data = self._read_at(start, self._size - start)
        rd = _Reader(data)
        for _ in range(self.count):
            length = rd.u32()
            yield decode_partition(rd.take(length))

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def load_partition(path, partition_id: int) -> Partition:
    with PartitionStore(path) as store:
        return store.load(partition_id)


def load_all(path) -> list[Partition]:
    with PartitionStore(path) as store:
        return list(store)
