"""Group users with exactly identical like profiles.

``bin_users`` hashes each column's sparse encoding and confirms every hash
hit by full comparison, so collisions can never merge different profiles.
``bin_users_naive`` is the sequential scan kept as an oracle: each user is
compared with one representative per bin, larger bins first, and opens a new
bin at the end of the list when nothing matches.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .matrix import LikeMatrix


@dataclass(frozen=True)
class Bin:
    members: tuple[int, ...]  # column indices, ascending
    profile: tuple[int, ...]  # row indices of the liked tweets

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class BinList:
    bins: tuple[Bin, ...]

    def __len__(self) -> int:
        return len(self.bins)

    def __iter__(self):
        return iter(self.bins)

    @property
    def sizes(self) -> list[int]:
        return [b.size for b in self.bins]

    def as_partition(self) -> set[frozenset[int]]:
        return {frozenset(b.members) for b in self.bins}

    def canonical(self) -> "BinList":
        """Size-descending order, ties by smallest member."""
        return BinList(tuple(sorted(self.bins, key=lambda b: (-b.size, b.members[0]))))

    def assignment(self, m: int) -> np.ndarray:
        out = np.full(m, -1, dtype=np.int64)
        for i, b in enumerate(self.bins):
            out[list(b.members)] = i
        return out


def _blake(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def bin_users(matrix: LikeMatrix, hasher: Callable[[bytes], object] = _blake) -> BinList:
    table: dict[object, list[tuple[bytes, int]]] = {}
    members: list[list[int]] = []
    profiles: list[tuple[int, ...]] = []
    for j in range(matrix.m):
        col = matrix.column(j)
        enc = col.astype(np.int64).tobytes()
        bucket = table.setdefault(hasher(enc), [])
        for stored, b in bucket:
            if stored == enc:
                members[b].append(j)
                break
        else:
            bucket.append((enc, len(members)))
            members.append([j])
            profiles.append(tuple(int(x) for x in col))
    return BinList(tuple(Bin(tuple(ms), p) for ms, p in zip(members, profiles)))


def bin_users_naive(matrix: LikeMatrix) -> BinList:
    profiles = [frozenset(int(x) for x in matrix.column(j)) for j in range(matrix.m)]
    bins: list[list[int]] = []
    for j, prof in enumerate(profiles):
        placed = False
        # sorted() is stable, so equal-size bins keep list order
        for b in sorted(range(len(bins)), key=lambda b: -len(bins[b])):
            if profiles[bins[b][0]] == prof:
                bins[b].append(j)
                placed = True
                break
        if not placed:
            bins.append([j])
    return BinList(tuple(Bin(tuple(ms), tuple(sorted(profiles[ms[0]]))) for ms in bins))


def similarity(matrix: LikeMatrix, i: int, j: int, measure: str = "cosine") -> float:
    """Cosine or Jaccard similarity, or Hamming distance, between two users."""
    a = set(matrix.column(i).tolist())
    b = set(matrix.column(j).tolist())
    inter = len(a & b)
    if measure == "cosine":
        return inter / math.sqrt(len(a) * len(b))
    if measure == "jaccard":
        union = len(a | b)
        return inter / union if union else 1.0
    if measure == "hamming":
        return float(len(a ^ b))
    raise ValueError(f"unknown measure {measure!r}")


def coordination_probability(bin_size: int, c: float = 0.95) -> float:
    """Charitable probability ``c ** (|B| - 1)`` that a bin formed without coordination."""
    if isinstance(bin_size, bool) or int(bin_size) != bin_size or bin_size < 1:
        raise ValueError(f"bin_size must be a positive integer, got {bin_size!r}")
    if not 0 < c <= 1:
        raise ValueError(f"c must lie in (0, 1], got {c!r}")
    return c ** (int(bin_size) - 1)


@dataclass(frozen=True)
class HistogramRow:
    size: int
    bin_count: int
    user_count: int


def bin_size_histogram(bins: Iterable[Bin] | BinList, min_size: int = 1) -> list[HistogramRow]:
    if min_size < 1:
        raise ValueError("min_size must be >= 1")
    counts: dict[int, int] = {}
    for b in bins:
        if b.size >= min_size:
            counts[b.size] = counts.get(b.size, 0) + 1
    return [HistogramRow(s, k, s * k) for s, k in sorted(counts.items())]
