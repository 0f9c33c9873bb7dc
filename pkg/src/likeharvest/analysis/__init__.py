from .binning import (
    Bin,
    BinList,
    HistogramRow,
    bin_size_histogram,
    bin_users,
    bin_users_naive,
    coordination_probability,
    similarity,
)
from .matrix import LikeMatrix, build_matrix
from .spectral import CorrelationResult, Embedding, canonicalize_signs, correlation_matrix, svd_embed

__all__ = [
    "Bin",
    "BinList",
    "CorrelationResult",
    "Embedding",
    "HistogramRow",
    "LikeMatrix",
    "bin_size_histogram",
    "bin_users",
    "bin_users_naive",
    "build_matrix",
    "canonicalize_signs",
    "coordination_probability",
    "correlation_matrix",
    "similarity",
    "svd_embed",
]
