"""Packed binary codes, Hamming balls and the code -> documents hash table.

Codes are stored as unsigned 64-bit integers. Bit ``p`` (the ``p``-th
hash function, ordered by ascending eigenvalue) sits at position ``p`` with
bit 0 the least significant. An on-bit (+1) is stored as 1. The string form
lists bits ``0..l-1`` left to right.

Index file layout (little-endian)::

    magic    8 bytes  b"STHINDEX"
    version  uint32   1
    l        uint32   code length
    n        uint64   number of records
    records  n x (uint64 code, int64 doc_id), sorted by code, ties by doc_id
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

__all__ = [
    "MAX_BITS",
    "BitCode",
    "CodeIndex",
    "CodeMatrix",
    "ball",
    "ball_masks",
    "ball_size",
    "build_index",
    "hamming",
    "load_index",
    "query",
    "query_with_distances",
    "save_index",
]

MAX_BITS = 64
INDEX_MAGIC = b"STHINDEX"
INDEX_VERSION = 1
_RECORD = np.dtype([("code", "<u8"), ("doc_id", "<i8")])
_HEADER = np.dtype([("magic", "S8"), ("version", "<u4"), ("l", "<u4"), ("n", "<u8")])


def _check_length(l: int) -> None:
    if not 1 <= l <= MAX_BITS:
        raise ValueError(f"code length must be in [1, {MAX_BITS}], got {l}")


@dataclass(frozen=True)
class BitCode:
    value: int
    length: int

    def __post_init__(self):
        _check_length(self.length)
        if not 0 <= self.value < (1 << self.length):
            raise ValueError(f"value {self.value:#x} has bits beyond length {self.length}")

    @classmethod
    def from_string(cls, s: str) -> "BitCode":
        return cls(sum(1 << p for p, ch in enumerate(s) if ch == "1"), len(s))

    @classmethod
    def from_signs(cls, signs) -> "BitCode":
        signs = np.asarray(signs).ravel()
        return cls(sum(1 << p for p in np.flatnonzero(signs > 0).tolist()), signs.size)

    def signs(self) -> np.ndarray:
        return np.array([1 if (self.value >> p) & 1 else -1 for p in range(self.length)], dtype=np.int8)

    def truncate(self, l: int) -> "BitCode":
        return BitCode(self.value & ((1 << l) - 1), l)

    def __str__(self):
        return "".join("1" if (self.value >> p) & 1 else "0" for p in range(self.length))


def hamming(a: BitCode, b: BitCode) -> int:
    if a.length != b.length:
        raise ValueError(f"code length mismatch: {a.length} vs {b.length}")
    return (a.value ^ b.value).bit_count()


def ball_size(l: int, radius: int) -> int:
    if radius < 0 or radius > l:
        raise ValueError(f"radius must be in [0, {l}], got {radius}")
    return sum(math.comb(l, i) for i in range(radius + 1))


def _flip_masks(l: int, radius: int) -> Iterator[int]:
    for d in range(radius + 1):
        for bits in itertools.combinations(range(l), d):
            yield sum(1 << p for p in bits)


def ball(center: BitCode, radius: int) -> Iterator[BitCode]:
    """Every code within ``radius`` of ``center``, by ascending distance."""
    if radius < 0 or radius > center.length:
        raise ValueError(f"radius must be in [0, {center.length}], got {radius}")
    for mask in _flip_masks(center.length, radius):
        yield BitCode(center.value ^ mask, center.length)


@lru_cache(maxsize=64)
def ball_masks(l: int, radius: int) -> np.ndarray:
    """XOR masks of the radius-``radius`` ball as a uint64 array (cached)."""
    ball_size(l, radius)
    return np.fromiter(_flip_masks(l, radius), dtype=np.uint64, count=ball_size(l, radius))


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    """``n x l`` codes in +1/-1 form, one row per document."""

    signs: np.ndarray
    doc_ids: np.ndarray

    def __post_init__(self):
        signs = np.asarray(self.signs, dtype=np.int8)
        if signs.ndim != 2:
            raise ValueError("signs must be a 2-d array")
        _check_length(signs.shape[1])
        if not np.all(np.abs(signs) == 1):
            raise ValueError("code entries must be +1 or -1")
        ids = np.asarray(self.doc_ids, dtype=np.int64)
        if ids.shape != (signs.shape[0],):
            raise ValueError("need one doc_id per code row")
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "doc_ids", ids)

    @property
    def n(self) -> int:
        return self.signs.shape[0]

    @property
    def length(self) -> int:
        return self.signs.shape[1]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, CodeMatrix):
            return NotImplemented
        return np.array_equal(self.signs, other.signs) and np.array_equal(self.doc_ids, other.doc_ids)

    def packed(self) -> np.ndarray:
        on = (self.signs > 0).astype(np.uint64)
        weights = np.left_shift(np.uint64(1), np.arange(self.length, dtype=np.uint64))
        return (on * weights).sum(axis=1, dtype=np.uint64)

    @classmethod
    def from_packed(cls, packed, length: int, doc_ids) -> "CodeMatrix":
        packed = np.asarray(packed, dtype=np.uint64)
        bits = (packed[:, None] >> np.arange(length, dtype=np.uint64)) & np.uint64(1)
        return cls(np.where(bits == 1, 1, -1).astype(np.int8), doc_ids)

    def code(self, i: int) -> BitCode:
        return BitCode(int(self.packed()[i]), self.length)

    def truncate(self, l: int) -> "CodeMatrix":
        _check_length(l)
        if l > self.length:
            raise ValueError(f"cannot truncate {self.length}-bit codes to {l} bits")
        return CodeMatrix(self.signs[:, :l], self.doc_ids)

    def on_counts(self) -> np.ndarray:
        return (self.signs > 0).sum(axis=0)

    def save(self, path) -> None:
        """Text form: ``doc_id<TAB>bits`` per row, bits in position order."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# n={self.n} l={self.length}\n")
            for doc_id, row in zip(self.doc_ids.tolist(), self.signs):
                fh.write(f"{doc_id}\t{''.join('1' if b > 0 else '0' for b in row)}\n")

    @classmethod
    def load(cls, path) -> "CodeMatrix":
        ids, rows = [], []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip() or line.startswith("#"):
                    continue
                doc_id, bits = line.split()
                ids.append(int(doc_id))
                rows.append([1 if ch == "1" else -1 for ch in bits])
        return cls(np.array(rows, dtype=np.int8), np.array(ids, dtype=np.int64))


class CodeIndex:
    """Hash table from packed code to the doc_ids stored under it."""

    def __init__(self, codes: np.ndarray, doc_ids: np.ndarray, length: int):
        _check_length(length)
        self.length = length
        self.codes = np.asarray(codes, dtype=np.uint64)
        self.doc_ids = np.asarray(doc_ids, dtype=np.int64)
        if self.codes.shape != self.doc_ids.shape:
            raise ValueError("codes and doc_ids must align")
        if length < 64 and np.any(self.codes >> np.uint64(length)):
            raise ValueError(f"code has bits beyond length {length}")
        self.buckets: dict[int, list[int]] = {}
        for code, doc_id in zip(self.codes.tolist(), self.doc_ids.tolist()):
            self.buckets.setdefault(code, []).append(doc_id)

    @property
    def n(self) -> int:
        return int(self.codes.size)

    def __len__(self):
        return self.n

    def bucket_sizes(self) -> np.ndarray:
        return np.array([len(v) for v in self.buckets.values()], dtype=np.int64)

    def stats(self) -> dict:
        sizes = self.bucket_sizes()
        return {
            "n": self.n,
            "length": self.length,
            "buckets": int(sizes.size),
            "max_bucket": int(sizes.max()) if sizes.size else 0,
            "mean_bucket": float(sizes.mean()) if sizes.size else 0.0,
        }


def build_index(codes: CodeMatrix) -> CodeIndex:
    return CodeIndex(codes.packed(), codes.doc_ids, codes.length)


def query_with_distances(index: CodeIndex, center: BitCode, radius: int) -> list[tuple[int, int]]:
    """``(doc_id, distance)`` pairs within ``radius``, ordered by distance then doc_id.

    Probes the buckets of the Hamming ball when it is smaller than the index,
    otherwise scans every stored code; both paths give the same answer.
    """
    if center.length != index.length:
        raise ValueError(f"query length {center.length} does not match index length {index.length}")
    size = ball_size(index.length, radius)
    hits: list[tuple[int, int]] = []
    if size < index.n:
        for mask in ball_masks(index.length, radius).tolist():
            docs = index.buckets.get(center.value ^ mask)
            if docs:
                dist = mask.bit_count()
                hits.extend((doc_id, dist) for doc_id in docs)
    else:
        dist = np.bitwise_count(index.codes ^ np.uint64(center.value))
        sel = np.flatnonzero(dist <= radius)
        hits = list(zip(index.doc_ids[sel].tolist(), dist[sel].tolist()))
    hits.sort(key=lambda h: (h[1], h[0]))
    return hits


def query(index: CodeIndex, center: BitCode, radius: int) -> list[int]:
    return [doc_id for doc_id, _ in query_with_distances(index, center, radius)]


def save_index(index: CodeIndex, path) -> None:
    order = np.lexsort((index.doc_ids, index.codes))
    header = np.array([(INDEX_MAGIC, INDEX_VERSION, index.length, index.n)], dtype=_HEADER)
    records = np.empty(index.n, dtype=_RECORD)
    records["code"] = index.codes[order]
    records["doc_id"] = index.doc_ids[order]
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(records.tobytes())


def load_index(path) -> CodeIndex:
    raw = open(path, "rb").read()
    if len(raw) < _HEADER.itemsize:
        raise ValueError(f"{path}: truncated index header")
    header = np.frombuffer(raw[: _HEADER.itemsize], dtype=_HEADER)[0]
    if header["magic"] != INDEX_MAGIC:
        raise ValueError(f"{path}: not an index file")
    if header["version"] != INDEX_VERSION:
        raise ValueError(f"{path}: unsupported index version {header['version']}")
    n = int(header["n"])
    body = raw[_HEADER.itemsize:]
    if len(body) != n * _RECORD.itemsize:
        raise ValueError(f"{path}: expected {n} records")
    records = np.frombuffer(body, dtype=_RECORD)
    return CodeIndex(records["code"].copy(), records["doc_id"].copy(), int(header["l"]))
