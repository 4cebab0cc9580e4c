"""Exact DPP probability evaluation, a brute-force MAP oracle, fast greedy
MAP inference with incremental Cholesky updates, and the purge-ratio sampler.

The L-ensemble assigns a subset ``A`` the unnormalized weight ``det(L_A)``;
the normalization constant over all subsets is ``det(L + I)``. Greedy MAP
selection repeatedly adds the item with the largest squared marginal gain
``d_i^2 = L_ii - |c_i|^2``, where ``c_i`` is that candidate's incrementally
maintained Cholesky row, so ``det(L_{Y+i}) = det(L_Y) * d_i^2`` holds at
every step.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass

import numpy as np

from ._backend import greedy_select
from .errors import DegenerateGain, InstanceTooLarge
from .kernel import LEnsemble
from .numerics import SymMatrix, _checked_indices, cholesky

#: Below this squared gain the kernel is treated as numerically rank-deficient.
GAIN_FLOOR = 1e-12

#: Default cap on the number of subsets exhaustive MAP search will visit.
DEFAULT_ENUM_BUDGET = 10_000_000

ENUM_BUDGET_ENV = "DPPMASK_ENUM_BUDGET"


def enum_budget() -> int:
    """Current exhaustive-enumeration budget (env override or default)."""
    return int(os.environ.get(ENUM_BUDGET_ENV, DEFAULT_ENUM_BUDGET))


def _entries(l: LEnsemble | SymMatrix) -> np.ndarray:
    if isinstance(l, LEnsemble):
        return l.matrix.entries
    return l.entries


def normalization_constant(l: LEnsemble | SymMatrix) -> float:
    """det(L + I), the sum of det(L_A) over every subset A of the ground set."""
    a = _entries(l)
    factor = cholesky(SymMatrix(a + np.eye(a.shape[0])))
    return float(np.exp(2.0 * np.sum(np.log(np.diag(factor.lower)))))


def subset_probability(l: LEnsemble | SymMatrix, indices) -> float:
    """Probability det(L_A) / det(L + I) of observing exactly the subset A.

    The empty subset has weight det of the 0x0 matrix, which is 1. Tiny
    negative determinants produced by rounding on singular submatrices are
    clamped to zero.
    """
    a = _entries(l)
    idx = _checked_indices(indices, a.shape[0])
    weight = 1.0 if not idx else float(np.linalg.det(a[np.ix_(idx, idx)]))
    p = max(weight, 0.0) / normalization_constant(l)
    return min(p, 1.0)


def exact_map(l: LEnsemble | SymMatrix, k: int, budget: int | None = None) -> list[int]:
    """Exhaustive argmax of det(L_A) over all size-k subsets.

    Ties resolve to the lexicographically smallest index list. Combinatorial:
    refuses to enumerate more than ``budget`` subsets (default 10^7, or the
    DPPMASK_ENUM_BUDGET environment variable when set).
    """
    a = _entries(l)
    n = a.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if budget is None:
        budget = enum_budget()
    total = math.comb(n, k)
    if total > budget:
        raise InstanceTooLarge(f"C({n},{k}) = {total} subsets exceeds budget {budget}")
    best: tuple[int, ...] | None = None
    best_det = -math.inf
    for combo in itertools.combinations(range(n), k):
        det = float(np.linalg.det(a[np.ix_(combo, combo)]))
        if det > best_det:
            best_det = det
            best = combo
    assert best is not None
    return list(best)


@dataclass
class GreedyState:
    """Mutable state of one greedy selection run (single-owner, sequential).

    ``c_rows[t, i]`` holds the entry appended to candidate i's Cholesky row
    at step t, so candidate i's current row is ``c_rows[:len(selected), i]``
    and its squared marginal gain is ``gains[i] = L_ii - |c_i|^2``.
    """

    selected: list[int]
    c_rows: np.ndarray
    gains: np.ndarray
    excluded: np.ndarray

    def c_row(self, i: int) -> np.ndarray:
        return self.c_rows[: len(self.selected), i]


@dataclass(frozen=True)
class SampleResult:
    """Outcome of one purge-ratio sampling run.

    ``visible`` lists the chosen indices in selection order: greedy picks
    first, random fills after. ``gain_trace`` holds the squared marginal gain
    of each greedy pick and is non-increasing. ``aborted_at_gain`` is the
    best gain that failed the threshold test, or None if greedy never
    aborted.
    """

    visible: np.ndarray
    greedy_count: int
    gain_trace: np.ndarray
    aborted_at_gain: float | None = None


def greedy_init(l: LEnsemble | SymMatrix) -> GreedyState:
    """Fresh state: nothing selected, every gain starts at its diagonal entry."""
    a = _entries(l)
    n = a.shape[0]
    return GreedyState(
        selected=[],
        c_rows=np.zeros((0, n), dtype=np.float64),
        gains=np.ascontiguousarray(np.diag(a)).astype(np.float64),
        excluded=np.zeros(n, dtype=bool),
    )

def greedy_step(state: GreedyState, l: LEnsemble | SymMatrix) -> tuple[GreedyState, int, float]:
    """Accept the candidate with the best squared marginal gain and update
    every remaining candidate's Cholesky row and gain.

    Ties go to the first occurrence in index order. Raises DegenerateGain
    when the best available gain has fallen to the numerical floor.
    """
    a = _entries(l)
    if state.excluded.all():
        raise ValueError("no unselected candidates remain")
    masked = np.where(state.excluded, -np.inf, state.gains)
    j = int(np.argmax(masked))
    best = float(masked[j])
    if best <= GAIN_FLOOR:
        raise DegenerateGain(f"max squared gain {best:g} is at or below {GAIN_FLOOR:g}")
    step = len(state.selected)
    d = math.sqrt(best)
    e = (a[j, :] - state.c_rows[:step, j] @ state.c_rows[:step, :]) / d
    state.c_rows = np.vstack([state.c_rows, e[None, :]])
    state.gains -= e * e
    np.maximum(state.gains, 0.0, out=state.gains)
    state.selected.append(j)
    state.excluded[j] = True
    return state, j, best


def sample_mask(
    l: LEnsemble | SymMatrix,
    k: int,
    tau: float,
    rng: np.random.Generator,
) -> SampleResult:
    """Select k items: greedily while the best squared gain stays at or above
    ``tau``, then uniformly at random without replacement once it drops.

    The threshold test runs before each pick, and the first failure is final:
    gains never increase, so greedy could not resume anyway. ``tau = 0``
    keeps the selection fully greedy on any kernel with full numerical rank;
    ``tau = 1`` short-circuits to uniform sampling, honoring its fully-random
    reading (the unit diagonal would otherwise let the first pick through).
    A best gain at the numerical floor also aborts to random fill, so
    rank-deficient kernels still yield k items instead of a division blowup.
    """
    a = _entries(l)
    n = a.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")

    if tau >= 1.0:
        visible = rng.choice(n, size=k, replace=False).astype(np.int64)
        return SampleResult(
            visible=visible,
            greedy_count=0,
            gain_trace=np.empty(0, dtype=np.float64),
            aborted_at_gain=None,
        )

    picks, gains, abort_gain = greedy_select(a, k, tau, GAIN_FLOOR)
    greedy_count = len(picks)
    if greedy_count < k:
        remaining = np.setdiff1d(np.arange(n, dtype=np.int64), picks, assume_unique=True)
        fill = rng.choice(remaining, size=k - greedy_count, replace=False)
        visible = np.concatenate([picks, fill.astype(np.int64)])
    else:
        visible = picks
    return SampleResult(
        visible=visible,
        greedy_count=greedy_count,
        gain_trace=gains,
        aborted_at_gain=None if math.isnan(abort_gain) else float(abort_gain),
    )
