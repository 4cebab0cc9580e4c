"""Dense symmetric-matrix primitives: Cholesky, log-determinant, submatrix.

Everything runs in 64-bit floats. Types are immutable after construction and
all operations are pure functions, so they are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import cholesky_lower
from .errors import IndexOutOfRange, NonFiniteValue, NotPositiveDefinite


@dataclass(frozen=True)
class SymMatrix:
    """Square symmetric matrix with finite entries.

    Construction symmetrizes the input as ``(a + a.T) / 2``, which makes
    ``entries[i, j] == entries[j, i]`` hold exactly (float addition is
    commutative), and rejects NaN or Inf entries.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NonFiniteValue("matrix entries must be finite")
        sym = (a + a.T) * 0.5
        sym.setflags(write=False)
        object.__setattr__(self, "entries", sym)

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    @staticmethod
    def identity(n: int) -> "SymMatrix":
        return SymMatrix(np.eye(n))


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor with nonnegative diagonal."""

    lower: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.lower, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if a.size and np.any(np.triu(a, 1) != 0.0):
            raise ValueError("strictly upper entries must be zero")
        if a.size and np.any(np.diag(a) < 0.0):
            raise ValueError("diagonal entries must be nonnegative")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "lower", a)

    @property
    def order(self) -> int:
        return self.lower.shape[0]


def cholesky(m: SymMatrix, jitter: float = 0.0) -> CholeskyFactor:
    """Factor ``m + jitter*I`` as ``lower @ lower.T``.

    Raises NotPositiveDefinite, naming the failing pivot, when a pivot fails
    to stay positive after the jitter is applied.
    """
    if jitter < 0.0:
        raise ValueError("jitter must be nonnegative")
    lower, failed = cholesky_lower(m.entries, float(jitter))
    if failed >= 0:
        a = m.entries
        row = lower[failed, :failed]
        value = a[failed, failed] + jitter - float(row @ row)
        raise NotPositiveDefinite(failed, value)
    return CholeskyFactor(lower)


def log_det(m: SymMatrix, jitter: float = 0.0) -> float:
    """log det of a positive definite matrix via its Cholesky diagonal.

    The empty matrix has determinant 1, hence log-determinant 0.
    """
    if m.order == 0:
        return 0.0
    factor = cholesky(m, jitter)
    return 2.0 * float(np.sum(np.log(np.diag(factor.lower))))


def submatrix(m: SymMatrix, indices) -> SymMatrix:
    """Rows and columns of ``m`` selected by ``indices``, in the given order.

    Indices must be distinct and in range. An empty selection yields the 0x0
    matrix, whose determinant is 1 by convention.
    """
    idx = _checked_indices(indices, m.order)
    return SymMatrix(m.entries[np.ix_(idx, idx)])


def _checked_indices(indices, n: int) -> list[int]:
    idx = [int(i) for i in indices]
    seen = set()
    for i in idx:
        if i < 0 or i >= n:
            raise IndexOutOfRange(f"index {i} outside matrix of order {n}")
        if i in seen:
            raise IndexOutOfRange(f"duplicate index {i}")
        seen.add(i)
    return idx
