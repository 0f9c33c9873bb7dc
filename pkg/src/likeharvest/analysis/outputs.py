"""Plot-ready CSV files and a dependency-free SVG scatter."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable

import numpy as np

from .binning import BinList, HistogramRow, coordination_probability
from .matrix import LikeMatrix
from .spectral import Embedding

BINS_HEADER = ["bin_id", "size", "p_b", "member_user_ids"]
HISTOGRAM_HEADER = ["size", "bin_count", "user_count"]
EMBEDDING_HEADER = ["user_id", "x", "y", "bin_id", "excluded"]


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_bins_csv(path: str | Path, bins: BinList, matrix: LikeMatrix, c: float = 0.95) -> None:
    """One row per bin; ``bin_id`` is the position in ``bins``."""
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(BINS_HEADER)
        for i, b in enumerate(bins):
            ids = " ".join(str(int(matrix.user_ids[j])) for j in b.members)
            w.writerow([i, b.size, repr(coordination_probability(b.size, c)), ids])


def write_histogram_csv(path: str | Path, rows: Iterable[HistogramRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(HISTOGRAM_HEADER)
        for r in rows:
            w.writerow([r.size, r.bin_count, r.user_count])


def write_embedding_csv(path: str | Path, embedding: Embedding, matrix: LikeMatrix, bins: BinList) -> None:
    """Every user of the matrix; excluded users get empty coordinates."""
    assign = bins.assignment(matrix.m)
    pos = {int(c): r for r, c in enumerate(embedding.columns)}
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(EMBEDDING_HEADER)
        for j in range(matrix.m):
            r = pos.get(j)
            if r is None:
                w.writerow([int(matrix.user_ids[j]), "", "", int(assign[j]), 1])
            else:
                x, y = embedding.coords[r, 0], embedding.coords[r, 1] if embedding.coords.shape[1] > 1 else 0.0
                w.writerow([int(matrix.user_ids[j]), repr(float(x)), repr(float(y)), int(assign[j]), 0])


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def embedding_svg(
    embedding: Embedding,
    bins: BinList,
    matrix: LikeMatrix,
    *,
    min_size: int = 50,
    size: int = 640,
    margin: int = 32,
) -> str:
    """Scatter of the first two coordinates.

    Coinciding users are drawn as one dot whose area grows with their count;
    users in bins of at least ``min_size`` are highlighted.
    """
    coords = np.asarray(embedding.coords, dtype=np.float64)
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">'
    parts = [head, f'<rect width="{size}" height="{size}" fill="white"/>']
    if coords.shape[0] == 0:
        return "\n".join(parts + ["</svg>", ""])
    xy = coords[:, :2] if coords.shape[1] >= 2 else np.column_stack([coords[:, 0], np.zeros(len(coords))])
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    inner = size - 2 * margin
    px = margin + (xy[:, 0] - lo[0]) / span[0] * inner
    py = size - margin - (xy[:, 1] - lo[1]) / span[1] * inner
    large = set()
    assign = bins.assignment(matrix.m)
    for i, b in enumerate(bins):
        if b.size >= min_size:
            large.add(i)
    points: dict[tuple[str, str], list[int]] = {}
    for r, col in enumerate(embedding.columns):
        key = (_fmt(px[r]), _fmt(py[r]))
        entry = points.setdefault(key, [0, 0])
        entry[0] += 1
        entry[1] |= int(assign[int(col)] in large)
    # draw ordinary users first so highlighted dots stay visible
    for flag in (0, 1):
        fill = "#d62728" if flag else "#1f77b4"
        for (x, y), (count, hot) in sorted(points.items()):
            if hot != flag:
                continue
            r = 2.0 + math.sqrt(count - 1) * 0.6
            parts.append(f'<circle cx="{x}" cy="{y}" r="{r:.2f}" fill="{fill}" fill-opacity="0.6"/>')
    axis = "#888888"
    parts.append(f'<line x1="{margin}" y1="{size - margin}" x2="{size - margin}" y2="{size - margin}" stroke="{axis}"/>')
    parts.append(f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{size - margin}" stroke="{axis}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
