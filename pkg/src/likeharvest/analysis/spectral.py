"""User-user correlation and its leading eigenvectors.

The m x m sample correlation matrix X of the like matrix's columns equals
``Z.T @ Z / (n - 1)`` where Z is the column-standardized like matrix. Its
eigenvectors are therefore Z's right singular vectors and its eigenvalues
are squared singular values over ``n - 1``. ``svd_embed`` works with Z
implicitly (sparse matrix plus a rank-one mean correction), so the dense
m x m matrix is never formed.

Each user's coordinates are its entries in the leading ``q`` eigenvectors,
each scaled by the eigenvalue (rows of ``U_q D_q``).

Users who liked every observed tweet have zero variance and no defined
correlation; they are excluded and reported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import DenseCapError, EmptyMatrixError, NumericalError
from .matrix import LikeMatrix

DEFAULT_DENSE_CAP = 2000
ZERO_VARIANCE = "zero variance: liked every observed tweet"


def variance_mask(matrix: LikeMatrix) -> np.ndarray:
    s = matrix.column_sums
    return (s > 0) & (s < matrix.n)


def _excluded(matrix: LikeMatrix, keep: np.ndarray) -> tuple[tuple[int, str], ...]:
    return tuple((int(matrix.user_ids[j]), ZERO_VARIANCE) for j in np.flatnonzero(~keep))


@dataclass(frozen=True)
class CorrelationResult:
    values: np.ndarray  # k x k
    columns: np.ndarray  # LikeMatrix column index of each row/column of ``values``
    excluded: tuple[tuple[int, str], ...]


def correlation_matrix(matrix: LikeMatrix, dense_cap: int = DEFAULT_DENSE_CAP) -> CorrelationResult:
    if matrix.m > dense_cap:
        raise DenseCapError(
            f"m={matrix.m} exceeds the dense cap of {dense_cap}; use svd_embed, which never forms the m x m matrix"
        )
    keep = variance_mask(matrix) if matrix.n >= 2 else np.zeros(matrix.m, dtype=bool)
    cols = np.flatnonzero(keep)
    a = matrix.toarray()[:, cols].astype(np.float64)
    n = matrix.n
    if cols.size:
        z = (a - a.mean(axis=0)) / a.std(axis=0, ddof=1)
        values = z.T @ z / (n - 1)
    else:
        values = np.zeros((0, 0))
    return CorrelationResult(values, cols, _excluded(matrix, keep))


class CorrelationOperator:
    """Applies X to a block of vectors without forming X."""

    def __init__(self, matrix: LikeMatrix, columns: np.ndarray):
        self.a = sp.csc_matrix(matrix.data[:, columns], dtype=np.float64)
        self.at = self.a.T.tocsr()
        n = matrix.n
        s = np.asarray(matrix.column_sums[columns], dtype=np.float64)
        self.n = n
        self.mu = s / n
        self.sd = np.sqrt((s - s * s / n) / (n - 1))

    @property
    def size(self) -> int:
        return self.mu.size

    def __call__(self, v: np.ndarray) -> np.ndarray:
        w = v / self.sd[:, None]
        y = self.a @ w - (self.mu @ w)[None, :]
        r = (self.at @ y - self.mu[:, None] * y.sum(axis=0)[None, :]) / self.sd[:, None]
        return r / (self.n - 1)


def canonicalize_signs(coords: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive.

    Near-ties in magnitude (within ``rtol``) go to the lowest row index.
    """
    out = np.array(coords, dtype=np.float64, copy=True)
    for c in range(out.shape[1]):
        mags = np.abs(out[:, c])
        top = mags.max() if mags.size else 0.0
        if top == 0:
            continue
        lead = int(np.flatnonzero(mags >= top * (1 - rtol))[0])
        if out[lead, c] < 0:
            out[:, c] = -out[:, c]
    return out


@dataclass(frozen=True)
class Embedding:
    user_ids: np.ndarray  # embedded users
    columns: np.ndarray  # their LikeMatrix column indices
    coords: np.ndarray  # (len(user_ids), q)
    eigenvalues: np.ndarray  # (q,), descending
    excluded: tuple[tuple[int, str], ...]
    iterations: int
    residual: float


def svd_embed(
    matrix: LikeMatrix,
    q: int = 2,
    *,
    tol: float = 1e-11,
    max_iter: int = 10_000,
    block: int | None = None,
    seed: int = 0,
) -> Embedding:
    """Leading ``q`` eigenpairs of the user correlation matrix by block
    orthogonal iteration with Rayleigh-Ritz extraction.

    Iterates until every wanted Ritz pair has residual
    ``||X v - theta v|| <= tol * max(1, theta_1)``; raises
    :class:`NumericalError` after ``max_iter`` iterations.
    """
    if matrix.m == 0:
        raise EmptyMatrixError("matrix has no users")
    keep = variance_mask(matrix) if matrix.n >= 2 else np.zeros(matrix.m, dtype=bool)
    cols = np.flatnonzero(keep)
    k = cols.size
    if k < max(2, q):
        raise EmptyMatrixError(f"need at least {max(2, q)} users with non-zero variance, have {k}")
    op = CorrelationOperator(matrix, cols)
    b = min(k, block if block is not None else q + 8)
    rng = np.random.default_rng(seed)
    v, _ = np.linalg.qr(rng.standard_normal((k, b)))
    residual = np.inf
    for it in range(1, max_iter + 1):
        w = op(v)
        h = v.T @ w
        theta, s = np.linalg.eigh((h + h.T) / 2)
        order = np.argsort(theta)[::-1]
        theta, s = theta[order], s[:, order]
        v, w = v @ s, w @ s
        residual = float(np.linalg.norm(w[:, :q] - v[:, :q] * theta[:q], axis=0).max())
        if residual <= tol * max(1.0, theta[0]):
            break
        v, _ = np.linalg.qr(w)
    else:
        raise NumericalError(f"eigen-iteration did not converge in {max_iter} iterations", residual)
    # X v = theta v, so the columns of w are the eigenvalue-weighted eigenvectors
    coords = canonicalize_signs(w[:, :q])
    return Embedding(
        user_ids=matrix.user_ids[cols],
        columns=cols,
        coords=coords,
        eigenvalues=theta[:q].copy(),
        excluded=_excluded(matrix, keep),
        iterations=it,
        residual=residual,
    )
