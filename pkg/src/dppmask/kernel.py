"""Gaussian L-ensemble construction over patch feature vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidBandwidth, NonFiniteValue
from .numerics import SymMatrix


@dataclass(frozen=True)
class FeatureMatrix:
    """N feature vectors of dimension n, one patch per row."""

    rows: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.rows, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError(f"expected a 2-d feature array, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"need at least one row and one column, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NonFiniteValue("feature values must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "rows", a)

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class LEnsemble:
    """Similarity kernel over the ground set, with unit diagonal."""

    matrix: SymMatrix
    bandwidth: float


def normalize_rows(f: FeatureMatrix) -> FeatureMatrix:
    """Scale every row to unit Euclidean norm; zero rows pass through."""
    norms = np.linalg.norm(f.rows, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return FeatureMatrix(f.rows / safe)


def gaussian_kernel(f: FeatureMatrix, epsilon: float = 1.0) -> LEnsemble:
    """Kernel with entries exp(-squared_distance(i, j) / epsilon).

    Squared distances come from the expanded form |a|^2 + |b|^2 - 2<a, b>,
    with tiny negatives clamped to zero so no entry rounds above 1. The
    diagonal is exactly 1.
    """
    if not epsilon > 0.0:
        raise InvalidBandwidth(f"bandwidth must be positive, got {epsilon}")
    rows = f.rows
    gram = rows @ rows.T
    sq_norms = np.diag(gram).copy()
    d2 = sq_norms[:, None] + sq_norms[None, :] - 2.0 * gram
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    entries = np.exp(-d2 / epsilon)
    return LEnsemble(matrix=SymMatrix(entries), bandwidth=float(epsilon))
