"""Binary embedding store.

Layout (all little-endian)::

    b"COFE" | version u32 | dim u32 | count u64
    count x ( id_len u16 | utf-8 id | dim x f32 )
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

MAGIC = b"COFE"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
_ID_LEN = struct.Struct("<H")


class StoreFormatError(ValueError):
    """Raised when a file is not a readable embedding store."""


class EmbeddingStore:
    """Ordered id -> float32 vector mapping with a fixed dimension."""

    def __init__(self, dim: int):
        if dim < 0 or dim >= 2 ** 32:
            raise ValueError(f"dim out of range: {dim}")
        self.dim = int(dim)
        self._ids: list[str] = []
        self._index: dict[str, int] = {}
        self._rows: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def __iter__(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(zip(self._ids, self._rows))

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def append(self, key: str, vector) -> None:
        v = np.asarray(vector)
        if v.ndim != 1 or v.shape[0] != self.dim:
            raise ValueError(f"vector for {key!r} has shape {v.shape}, store dim is {self.dim}")
        if key in self._index:
            raise ValueError(f"duplicate id {key!r}")
        if len(key.encode("utf-8")) >= 2 ** 16:
            raise ValueError(f"id too long: {key[:40]!r}...")
        self._index[key] = len(self._ids)
        self._ids.append(key)
        self._rows.append(v.astype("<f4"))

    def extend(self, ids: Iterable[str], matrix) -> None:
        for key, row in zip(ids, np.asarray(matrix)):
            self.append(key, row)

    def get(self, key: str) -> np.ndarray:
        return self._rows[self._index[key]]

    def matrix(self) -> np.ndarray:
        if not self._rows:
            return np.zeros((0, self.dim), dtype="<f4")
        return np.stack(self._rows)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (self.dim == other.dim and self._ids == other._ids
                and all(a.tobytes() == b.tobytes() for a, b in zip(self._rows, other._rows)))


def save_embeddings(store: EmbeddingStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, store.dim, len(store)))
        for key, row in store:
            raw = key.encode("utf-8")
            fh.write(_ID_LEN.pack(len(raw)))
            fh.write(raw)
            fh.write(row.astype("<f4").tobytes())


def load_embeddings(path) -> EmbeddingStore:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise StoreFormatError(f"{path}: truncated header")
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise StoreFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise StoreFormatError(f"{path}: unsupported version {version}")
    store = EmbeddingStore(dim)
    off = _HEADER.size
    width = 4 * dim
    for i in range(count):
        if off + 2 > len(data):
            raise StoreFormatError(f"{path}: truncated at record {i}")
        (n,) = _ID_LEN.unpack_from(data, off)
        off += 2
        if off + n + width > len(data):
            raise StoreFormatError(f"{path}: truncated at record {i}")
        try:
            key = data[off: off + n].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise StoreFormatError(f"{path}: record {i} id is not utf-8") from exc
        off += n
        row = np.frombuffer(data, dtype="<f4", count=dim, offset=off).copy()
        off += width
        try:
            store.append(key, row)
        except ValueError as exc:
            raise StoreFormatError(f"{path}: record {i}: {exc}") from exc
    if off != len(data):
        raise StoreFormatError(f"{path}: {len(data) - off} trailing bytes")
    return store
