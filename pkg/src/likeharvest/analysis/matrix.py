"""Binary tweet x user like matrix.

Rows are tweets and columns are users: entry (k, i) is 1 iff user i liked
tweet k. Rows are ordered by ascending tweet id, columns by ascending user id.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ..datastore import Dataset
from ..errors import EmptyMatrixError


@dataclass(frozen=True)
class LikeMatrix:
    data: sp.csc_matrix
    tweet_ids: np.ndarray
    user_ids: np.ndarray

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    def column(self, j: int) -> np.ndarray:
        """Sorted row indices of the tweets user ``j`` liked."""
        d = self.data
        return d.indices[d.indptr[j] : d.indptr[j + 1]]

    @cached_property
    def column_sums(self) -> np.ndarray:
        return np.diff(self.data.indptr)

    @cached_property
    def user_index(self) -> dict[int, int]:
        return {int(u): j for j, u in enumerate(self.user_ids)}

    @cached_property
    def tweet_index(self) -> dict[int, int]:
        return {int(t): k for k, t in enumerate(self.tweet_ids)}

    def toarray(self) -> np.ndarray:
        return self.data.toarray()

    @classmethod
    def from_dense(cls, array, tweet_ids=None, user_ids=None) -> "LikeMatrix":
        a = np.asarray(array)
        if a.ndim != 2:
            raise ValueError("expected a 2-D array")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("entries must be 0 or 1")
        if a.shape[1] and (a.sum(axis=0) == 0).any():
            raise ValueError("every user column needs at least one like")
        n, m = a.shape
        tweet_ids = np.arange(n, dtype=np.int64) if tweet_ids is None else np.asarray(tweet_ids, dtype=np.int64)
        user_ids = np.arange(m, dtype=np.int64) if user_ids is None else np.asarray(user_ids, dtype=np.int64)
        return cls(_canonical(sp.csc_matrix(a.astype(np.int8))), tweet_ids, user_ids)


def _canonical(mat: sp.csc_matrix) -> sp.csc_matrix:
    mat = mat.tocsc()
    mat.sum_duplicates()
    mat.sort_indices()
    mat.eliminate_zeros()
    return mat


def build_matrix(dataset: Dataset) -> LikeMatrix:
    """Compress collected likers into the binary matrix.

    Only tweets with at least one collected liker become rows; the user set is
    the union of all likers.
    """
    tweet_ids = sorted(tid for tid, users in dataset.likers.items() if users and tid in dataset.tweets)
    if not tweet_ids:
        raise EmptyMatrixError("dataset has no collected likers")
    user_ids = sorted({u for tid in tweet_ids for u in dataset.likers[tid]})
    col = {u: j for j, u in enumerate(user_ids)}
    rows, cols = [], []
    for k, tid in enumerate(tweet_ids):
        for u in dataset.likers[tid]:
            rows.append(k)
            cols.append(col[u])
    data = np.ones(len(rows), dtype=np.int8)
    mat = sp.csc_matrix((data, (rows, cols)), shape=(len(tweet_ids), len(user_ids)))
    return LikeMatrix(_canonical(mat), np.array(tweet_ids, dtype=np.int64), np.array(user_ids, dtype=np.int64))
