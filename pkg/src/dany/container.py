"""Binary tensor container.

Layout (all integers and floats little-endian):

    magic "DANY" | version u16 | entry count u32
    per entry: name length u16, UTF-8 name, rank u8, extents u32 each,
               raw float32 values

Entries are written sorted by name so identical content always produces
identical bytes; values are stored as float32 regardless of the engine's
active precision. Round-trips of float32 data are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["MAGIC", "VERSION", "write_container", "read_container", "container_metadata"]

MAGIC = b"DANY"
VERSION = 1
_MAX_RANK = 255


class ContainerError(ValueError):
    """Malformed or unsupported container file."""


def write_container(path, entries: dict[str, np.ndarray]) -> None:
    path = Path(path)
    blobs = []
    for name in sorted(entries):
        arr = np.asarray(entries[name], dtype="<f4")
        if arr.ndim and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        if arr.ndim > _MAX_RANK:
            raise ContainerError(f"entry {name!r} has rank {arr.ndim} > {_MAX_RANK}")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ContainerError(f"entry name too long: {name[:40]!r}...")
        header = struct.pack("<H", len(encoded)) + encoded + struct.pack("<B", arr.ndim)
        header += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blobs.append(header + arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(blobs)))
        for blob in blobs:
            fh.write(blob)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerError(f"{self.path}: truncated container")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _read_entries(path, metadata_only: bool):
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    if reader.take(4) != MAGIC:
        raise ContainerError(f"{path}: not a tensor container (bad magic)")
    version, count = reader.unpack("<HI")
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    out = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        shape = reader.unpack(f"<{rank}I") if rank else ()
        size = int(np.prod(shape)) if rank else 1
        if metadata_only:
            reader.take(4 * size)
            out[name] = tuple(shape)
        else:
            values = np.frombuffer(reader.take(4 * size), dtype="<f4")
            out[name] = values.reshape(shape).copy()
    if reader.pos != len(reader.data):
        raise ContainerError(f"{path}: trailing bytes after last entry")
    return out


def read_container(path) -> dict[str, np.ndarray]:
    return _read_entries(path, metadata_only=False)


def container_metadata(path) -> dict[str, tuple]:
    """Entry names and shapes without materializing the values."""
    return _read_entries(path, metadata_only=True)
