"""Hot numeric kernels in two interchangeable implementations.

The greedy selection loop and the pivoted Cholesky factorization dominate
runtime, so both carry a numba-compiled version next to a pure-numpy one.
The environment variable ``DPPMASK_BACKEND`` picks the implementation:

    DPPMASK_BACKEND=numba   force the jitted kernels (error if numba missing)
    DPPMASK_BACKEND=numpy   force the pure-numpy fallback
    unset or "auto"         numba when importable, numpy otherwise

Both backends run the same update recurrences in the same candidate order,
so selections agree; only last-ulp rounding of dot products may differ.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an install-time choice
    HAVE_NUMBA = False


def _resolve_backend(name: str) -> str:
    name = name.strip().lower() or "auto"
    if name == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    if name not in ("numba", "numpy"):
        raise ValueError(f"DPPMASK_BACKEND must be 'numba', 'numpy' or 'auto', got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise ImportError("DPPMASK_BACKEND=numba but numba is not importable")
    return name


_ACTIVE = _resolve_backend(os.environ.get("DPPMASK_BACKEND", "auto"))


def active_backend() -> str:
    return _ACTIVE


def set_active_backend(name: str) -> str:
    """Switch the process-wide backend (used by benchmarks and tests).

    Returns the previously active backend name.
    """
    global _ACTIVE
    previous = _ACTIVE
    _ACTIVE = _resolve_backend(name)
    return previous


# ---------------------------------------------------------------------------
# Cholesky factorization, reporting the failing pivot index on breakdown.

def _cholesky_numpy(a: np.ndarray, jitter: float) -> tuple[np.ndarray, int]:
    n = a.shape[0]
    lower = np.zeros((n, n), dtype=np.float64)
    for j in range(n):
        row = lower[j, :j]
        pivot = a[j, j] + jitter - row @ row
        if not pivot > 0.0:  # catches <= 0 and NaN
            return lower, j
        d = math.sqrt(pivot)
        lower[j, j] = d
        if j + 1 < n:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ row) / d
    return lower, -1


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _cholesky_numba(a, jitter):  # pragma: no cover - exercised via dispatch
        n = a.shape[0]
        lower = np.zeros((n, n), dtype=np.float64)
        for j in range(n):
            acc = a[j, j] + jitter
            for t in range(j):
                acc -= lower[j, t] * lower[j, t]
            if not acc > 0.0:
                return lower, j
            d = np.sqrt(acc)
            lower[j, j] = d
            for i in range(j + 1, n):
                s = a[i, j]
                for t in range(j):
                    s -= lower[i, t] * lower[j, t]
                lower[i, j] = s / d
        return lower, -1


def cholesky_lower(a: np.ndarray, jitter: float, backend: str | None = None) -> tuple[np.ndarray, int]:
    """Lower-triangular factor of ``a + jitter*I``.

    Returns ``(lower, -1)`` on success or ``(partial, j)`` when pivot ``j``
    failed to stay positive.
    """
    if (backend or _ACTIVE) == "numba":
        return _cholesky_numba(a, jitter)
    return _cholesky_numpy(a, jitter)


# ---------------------------------------------------------------------------
# Greedy DPP selection: repeatedly pick the candidate with the largest squared
# marginal gain and extend each candidate's incremental Cholesky row.
#
# Shared conventions of both implementations:
#   * gains start from the kernel diagonal,
#   * argmax takes the first occurrence among unselected candidates,
#   * the threshold test runs before a pick is accepted; the loop stops when
#     the best gain drops below `tau` or to the `floor`, leaving the caller
#     to fill remaining slots,
#   * negative gains produced by rounding are clamped to zero.

def _greedy_numpy(L, k, tau, floor):
    n = L.shape[0]
    c_rows = np.zeros((k, n), dtype=np.float64)
    gains = np.ascontiguousarray(np.diag(L)).astype(np.float64)
    excluded = np.zeros(n, dtype=bool)
    picks = np.full(k, -1, dtype=np.int64)
    picked_gains = np.zeros(k, dtype=np.float64)
    count = 0
    abort_gain = math.nan
    for step in range(k):
        masked = np.where(excluded, -np.inf, gains)
        j = int(np.argmax(masked))
        best = float(masked[j])
        if best < tau or best <= floor:
            abort_gain = best
            break
        picks[step] = j
        picked_gains[step] = best
        count += 1
        excluded[j] = True
        d = math.sqrt(best)
        e = (L[j, :] - c_rows[:step, j] @ c_rows[:step, :]) / d
        c_rows[step, :] = e
        gains -= e * e
        np.maximum(gains, 0.0, out=gains)
    return picks[:count].copy(), picked_gains[:count].copy(), abort_gain


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _greedy_numba(L, k, tau, floor):  # pragma: no cover - exercised via dispatch
        n = L.shape[0]
        c_rows = np.zeros((k, n), dtype=np.float64)
        gains = np.empty(n, dtype=np.float64)
        for i in range(n):
            gains[i] = L[i, i]
        excluded = np.zeros(n, dtype=np.bool_)
        picks = np.empty(k, dtype=np.int64)
        picked_gains = np.empty(k, dtype=np.float64)
        count = 0
        abort_gain = np.nan
        for step in range(k):
            j = -1
            best = -np.inf
            for i in range(n):
                if not excluded[i] and gains[i] > best:
                    best = gains[i]
                    j = i
            if best < tau or best <= floor:
                abort_gain = best
                break
            picks[step] = j
            picked_gains[step] = best
            count += 1
            excluded[j] = True
            d = np.sqrt(best)
            for i in range(n):
                s = 0.0
                for t in range(step):
                    s += c_rows[t, j] * c_rows[t, i]
                e = (L[j, i] - s) / d
                c_rows[step, i] = e
                g = gains[i] - e * e
                gains[i] = g if g > 0.0 else 0.0
        return picks[:count].copy(), picked_gains[:count].copy(), abort_gain


def greedy_select(
    L: np.ndarray, k: int, tau: float, floor: float, backend: str | None = None
) -> tuple[np.ndarray, np.ndarray, float]:
    """Greedy picks until ``k`` items are chosen or the best gain falls
    below ``tau`` (or to ``floor``).

    Returns ``(picks, gains, abort_gain)`` where ``abort_gain`` is NaN when
    the selection ran to completion.
    """
    if (backend or _ACTIVE) == "numba":
        return _greedy_numba(L, int(k), float(tau), float(floor))
    return _greedy_numpy(L, int(k), float(tau), float(floor))


def warmup() -> None:
    """Trigger jit compilation so timed sections never include it."""
    if HAVE_NUMBA:
        a = np.eye(3)
        _cholesky_numba(a, 0.0)
        _greedy_numba(a, 2, 0.0, 1e-12)
