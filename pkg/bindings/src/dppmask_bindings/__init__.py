"""Binding surface for requesting masks from training input pipelines.

Everything here is plumbing around the installed ``dppmask`` package: the
request type validates the caller's buffer, the two entry points forward to
the library, and no selection logic is reimplemented. Results are therefore
identical to the command-line tool's feature mode for the same inputs.

Batch calls fan out over a thread pool. The hot numerical kernels release
the interpreter lock while they run, so items genuinely overlap and the
caller's data-loading threads keep making progress.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

import dppmask
from dppmask import (
    DimensionMismatch,
    DppMaskError,
    FeatureMatrix,
    MaskConfig,
    generate_mask,
)
from dppmask.masking import derived_seed

__version__ = dppmask.__version__

__all__ = [
    "BoundMaskRequest",
    "BoundMaskResult",
    "ContiguityError",
    "bound_batch",
    "bound_generate_mask",
    "__version__",
]


class ContiguityError(DppMaskError):
    """The feature buffer is not a C-contiguous float64 array."""


@dataclass(frozen=True, eq=False)
class BoundMaskRequest:
    """One mask request over a row-major float64 feature buffer.

    The buffer must be C-contiguous and finite with at least one row and
    one column; it is read without copying and stays writable for the
    caller. Scalar parameters carry the library's usual ranges and are
    validated on construction.
    """

    features: np.ndarray
    mask_ratio: float
    tau: float
    epsilon: float = 1.0
    seed: int = 0
    _matrix: FeatureMatrix = field(init=False, repr=False)

    def __post_init__(self):
        f = self.features
        if not isinstance(f, np.ndarray) or f.ndim != 2 or f.dtype != np.float64:
            raise ContiguityError(
                f"feature buffer must be a 2-d float64 array, got "
                f"{type(f).__name__} dtype={getattr(f, 'dtype', None)} "
                f"ndim={getattr(f, 'ndim', None)}"
            )
        if not f.flags.c_contiguous:
            raise ContiguityError("feature buffer must be C-contiguous (row-major)")
        if f.shape[0] < 1 or f.shape[1] < 1:
            raise DimensionMismatch(f"need at least one row and one column, got shape {f.shape}")
        # a view keeps this zero-copy while the library marks only the view
        # read-only, not the caller's buffer; finiteness is checked there
        object.__setattr__(self, "_matrix", FeatureMatrix(f.view()))
        self.config()

    def config(self) -> MaskConfig:
        return MaskConfig(
            mask_ratio=self.mask_ratio,
            tau=self.tau,
            epsilon=self.epsilon,
            seed=self.seed,
            mode="feature",
        )


@dataclass(frozen=True, eq=False)
class BoundMaskResult:
    """Visible patch indices (ascending) and how many greedy picks led."""

    visible: np.ndarray
    greedy_count: int


def _run(request: BoundMaskRequest, seed: int) -> BoundMaskResult:
    config = MaskConfig(
        mask_ratio=request.mask_ratio,
        tau=request.tau,
        epsilon=request.epsilon,
        seed=seed,
        mode="feature",
    )
    result = generate_mask(request._matrix, config)
    return BoundMaskResult(visible=result.visible, greedy_count=result.greedy_count)


def bound_generate_mask(request: BoundMaskRequest) -> BoundMaskResult:
    """Generate one mask; equivalent to the CLI's feature mode."""
    return _run(request, request.seed)


def bound_batch(requests) -> list[BoundMaskResult | DppMaskError]:
    """Generate one mask per request, in order, parallelizing internally.

    All requests must share one configuration; item ``i`` then runs under
    the same derived seed the library's batch helper assigns, so the output
    equals a loop of single calls. Failures surface as per-item error
    objects in their slot rather than aborting the batch.
    """
    requests = list(requests)
    if not requests:
        return []
    head = requests[0]
    shared = (head.mask_ratio, head.tau, head.epsilon, head.seed)
    for i, r in enumerate(requests[1:], start=1):
        if (r.mask_ratio, r.tau, r.epsilon, r.seed) != shared:
            raise dppmask.InvalidConfig(
                f"batch requires one shared configuration; request {i} differs"
            )

    def item(i: int) -> BoundMaskResult | DppMaskError:
        try:
            return _run(requests[i], derived_seed(head.seed, i))
        except DppMaskError as err:
            return err

    with ThreadPoolExecutor() as pool:
        return list(pool.map(item, range(len(requests))))
