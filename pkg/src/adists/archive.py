"""Portable binary weight archive.

Layout (all little-endian):

    magic   4 bytes  "TNSA"
    version u32      (currently 1)
    count   u32      number of entries
    entry   repeated count times:
        name_len u32
        name     name_len bytes, UTF-8
        rank     u32
        dims     rank x u64
        data     prod(dims) x f32

Entries keep insertion order; names must be unique. Tensors are stored and
held in memory as float32, so a write/read round trip is bit-exact.
"""

import struct
from collections import OrderedDict

import numpy as np

__all__ = ["WeightArchive", "ArchiveError", "load_archive", "save_archive"]

MAGIC = b"TNSA"
VERSION = 1


class ArchiveError(ValueError):
    """Malformed archive file or invalid archive contents."""


class WeightArchive:
    """Ordered name -> float32 ndarray mapping with binary serialization."""

    def __init__(self):
        self._entries = OrderedDict()

    def add(self, name, tensor):
        if name in self._entries:
            raise ArchiveError(f"duplicate entry name: {name!r}")
        arr = np.ascontiguousarray(tensor, dtype=np.float32)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self._entries[name] = arr
        return self

    def __contains__(self, name):
        return name in self._entries

    def __getitem__(self, name):
        try:
            return self._entries[name]
        except KeyError:
            raise KeyError(f"archive has no entry {name!r}") from None

    def get(self, name, default=None):
        return self._entries.get(name, default)

    def names(self):
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def __len__(self):
        return len(self._entries)

    def __eq__(self, other):
        if not isinstance(other, WeightArchive):
            return NotImplemented
        if self.names() != other.names():
            return False
        return all(
            a.shape == b.shape and np.array_equal(a, b, equal_nan=True)
            for (_, a), (_, b) in zip(self.items(), other.items())
        )

    def to_bytes(self):
        parts = [MAGIC, struct.pack("<II", VERSION, len(self._entries))]
        for name, arr in self._entries.items():
            raw = name.encode("utf-8")
            parts.append(struct.pack("<I", len(raw)))
            parts.append(raw)
            parts.append(struct.pack("<I", arr.ndim))
            parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            parts.append(arr.astype("<f4", copy=False).tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob):
        view = memoryview(blob)
        if len(view) < 12:
            raise ArchiveError("truncated archive: header incomplete")
        if bytes(view[:4]) != MAGIC:
            raise ArchiveError(
                f"bad magic bytes {bytes(view[:4])!r}, expected {MAGIC!r}"
            )
        version, count = struct.unpack_from("<II", view, 4)
        if version != VERSION:
            raise ArchiveError(f"unsupported archive version {version}")
        archive = cls()
        off = 12
        for _ in range(count):
            if off + 4 > len(view):
                raise ArchiveError("truncated archive: entry header")
            (name_len,) = struct.unpack_from("<I", view, off)
            off += 4
            if off + name_len + 4 > len(view):
                raise ArchiveError("truncated archive: entry name")
            name = bytes(view[off : off + name_len]).decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<I", view, off)
            off += 4
            if off + 8 * rank > len(view):
                raise ArchiveError("truncated archive: entry dims")
            dims = struct.unpack_from(f"<{rank}Q", view, off)
            off += 8 * rank
            n = 1
            for d in dims:
                n *= d
            nbytes = 4 * n
            if off + nbytes > len(view):
                raise ArchiveError(f"truncated archive: payload of {name!r}")
            arr = np.frombuffer(view[off : off + nbytes], dtype="<f4").reshape(dims)
            off += nbytes
            if name in archive:
                raise ArchiveError(f"duplicate entry name: {name!r}")
            archive._entries[name] = arr.copy()
        if off != len(view):
            raise ArchiveError(f"{len(view) - off} trailing bytes after last entry")
        return archive


def save_archive(archive, path):
    """Write an archive to disk."""
    with open(path, "wb") as fh:
        fh.write(archive.to_bytes())


def load_archive(path):
    """Read an archive from disk."""
    with open(path, "rb") as fh:
        blob = fh.read()
    return WeightArchive.from_bytes(blob)
