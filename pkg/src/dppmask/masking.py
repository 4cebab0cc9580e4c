"""Patch-level mask generation: patchify, shuffle, sample, map back to grid.

One mask generation run is sequential; batch items are independent and get
their own seeded random stream, so batches are reproducible regardless of
execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dpp import sample_mask
from .errors import DppMaskError, InvalidConfig, NonDivisibleImage
from .kernel import FeatureMatrix, gaussian_kernel, normalize_rows

#: Odd 64-bit stride separating the random streams of batch items; item i of a
#: batch seeded s behaves exactly like a single run seeded derived_seed(s, i).
SEED_STRIDE = 0x9E3779B97F4A7C15

_U64 = 1 << 64


def derived_seed(seed: int, index: int) -> int:
    """Seed of batch item ``index`` for a batch seeded ``seed``."""
    return (seed + SEED_STRIDE * index) % _U64


@dataclass(frozen=True)
class PatchGrid:
    """Exact tiling of an image into square patches."""

    image_height: int
    image_width: int
    patch_size: int
    channels: int

    def __post_init__(self):
        if self.patch_size < 1:
            raise InvalidConfig(f"patch_size must be >= 1, got {self.patch_size}")
        if self.channels not in (1, 3):
            raise InvalidConfig(f"channels must be 1 or 3, got {self.channels}")
        if self.image_height % self.patch_size or self.image_width % self.patch_size:
            raise NonDivisibleImage(self.image_height, self.image_width, self.patch_size)

    @property
    def rows(self) -> int:
        return self.image_height // self.patch_size

    @property
    def cols(self) -> int:
        return self.image_width // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class MaskConfig:
    """Masking parameters.

    ``mask_ratio`` is the fraction of patches hidden; the visible count is
    k = round((1 - mask_ratio) * N), rounding half up, and must be >= 1.
    ``tau`` is the purge ratio: greedy selection runs while the best squared
    marginal gain stays at or above it (0 fully greedy, 1 fully random).
    ``mask_ratio_jitter`` adds a per-item uniform offset in [-j, +j] to the
    ratio, for pipelines that vary it around a midpoint. ``position_weight``
    appends scaled (row, col) coordinates to pixel-mode features after
    normalization; 0 disables it.
    """

    mask_ratio: float
    tau: float
    epsilon: float = 1.0
    patch_size: int = 16
    seed: int = 0
    mode: str = "pixel"
    mask_ratio_jitter: float = 0.0
    position_weight: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.mask_ratio < 1.0:
            raise InvalidConfig(f"mask_ratio must be in [0, 1), got {self.mask_ratio}")
        if not 0.0 <= self.tau <= 1.0:
            raise InvalidConfig(f"tau must be in [0, 1], got {self.tau}")
        if not self.epsilon > 0.0:
            raise InvalidConfig(f"epsilon must be positive, got {self.epsilon}")
        if self.patch_size < 1:
            raise InvalidConfig(f"patch_size must be >= 1, got {self.patch_size}")
        if not 0 <= self.seed < _U64:
            raise InvalidConfig(f"seed must be an unsigned 64-bit value, got {self.seed}")
        if self.mode not in ("pixel", "feature"):
            raise InvalidConfig(f"mode must be 'pixel' or 'feature', got {self.mode!r}")
        if not 0.0 <= self.mask_ratio_jitter < 1.0:
            raise InvalidConfig(f"mask_ratio_jitter must be in [0, 1), got {self.mask_ratio_jitter}")
        if self.position_weight < 0.0:
            raise InvalidConfig(f"position_weight must be nonnegative, got {self.position_weight}")

    def visible_count(self, n_patches: int) -> int:
        """k = round((1 - mask_ratio) * N), ties rounding up."""
        k = int(np.floor((1.0 - self.mask_ratio) * n_patches + 0.5))
        if k < 1:
            raise InvalidConfig(
                f"mask_ratio {self.mask_ratio} over {n_patches} patches leaves no visible patch"
            )
        return min(k, n_patches)


@dataclass(frozen=True)
class MaskResult:
    """A generated mask, in original grid index order."""

    grid: PatchGrid
    visible: np.ndarray
    masked: np.ndarray
    greedy_count: int
    config: MaskConfig


def feature_grid(n: int) -> PatchGrid:
    """Degenerate 1 x N grid used when masks come from raw feature matrices."""
    return PatchGrid(image_height=1, image_width=n, patch_size=1, channels=1)


def patchify(image: np.ndarray, patch_size: int) -> tuple[PatchGrid, FeatureMatrix]:
    """Split an H x W (x C) pixel array into flattened patch rows.

    Row ``i * cols + j`` is the row-major flattening of the patch at grid
    position (i, j), with pixel values scaled from [0, 255] to [0, 1].
    """
    a = np.asarray(image)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError(f"expected an H x W x C pixel array, got shape {a.shape}")
    h, w, c = a.shape
    grid = PatchGrid(image_height=h, image_width=w, patch_size=patch_size, channels=c)
    p = patch_size
    patches = (
        a.reshape(grid.rows, p, grid.cols, p, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(grid.n_patches, p * p * c)
    )
    return grid, FeatureMatrix(patches.astype(np.float64) / 255.0)


def effective_features(
    features: FeatureMatrix, config: MaskConfig, grid: PatchGrid
) -> FeatureMatrix:
    """The rows the kernel actually sees: normalized, with optional scaled
    grid coordinates appended in pixel mode."""
    normalized = normalize_rows(features)
    if config.position_weight > 0.0 and config.mode == "pixel":
        n = features.count
        rows_idx, cols_idx = np.divmod(np.arange(n), grid.cols)
        coords = np.stack([rows_idx / grid.rows, cols_idx / grid.cols], axis=1)
        normalized = FeatureMatrix(
            np.hstack([normalized.rows, config.position_weight * coords])
        )
    return normalized

def generate_mask(
    features: FeatureMatrix,
    config: MaskConfig,
    rng: np.random.Generator | None = None,
    grid: PatchGrid | None = None,
) -> MaskResult:
    """Produce one mask: normalize rows, shuffle, build the Gaussian kernel,
    run the purge-ratio sampler, and map picks back to original indices.

    With ``rng`` omitted the stream is seeded from ``config.seed``, making
    the result a pure function of (features, config). ``grid`` carries the
    patch geometry in pixel mode; feature mode gets a flat 1 x N grid.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = features.count
    if grid is None:
        grid = feature_grid(n)
    if grid.n_patches != n:
        raise InvalidConfig(f"feature rows {n} do not match grid of {grid.n_patches} patches")

    ratio = config.mask_ratio
    if config.mask_ratio_jitter > 0.0:
        j = config.mask_ratio_jitter
        ratio = float(np.clip(ratio + rng.uniform(-j, j), 0.0, 1.0 - 1e-9))
        k = max(1, min(n, int(np.floor((1.0 - ratio) * n + 0.5))))
    else:
        k = config.visible_count(n)

    normalized = effective_features(features, config, grid)
    perm = rng.permutation(n)
    shuffled = FeatureMatrix(normalized.rows[perm])
    ensemble = gaussian_kernel(shuffled, config.epsilon)
    sampled = sample_mask(ensemble, k, config.tau, rng)

    visible = np.sort(perm[sampled.visible]).astype(np.int64)
    masked = np.setdiff1d(np.arange(n, dtype=np.int64), visible, assume_unique=True)
    return MaskResult(
        grid=grid,
        visible=visible,
        masked=masked,
        greedy_count=sampled.greedy_count,
        config=config,
    )


def mask_image(
    image: np.ndarray, config: MaskConfig, rng: np.random.Generator | None = None
) -> MaskResult:
    """Pixel-mode pipeline: patchify then generate."""
    grid, features = patchify(image, config.patch_size)
    return generate_mask(features, config, rng=rng, grid=grid)


def mask_to_bitmap(result: MaskResult) -> np.ndarray:
    """Boolean rows x cols grid, True at visible patches."""
    flat = np.zeros(result.grid.n_patches, dtype=bool)
    flat[result.visible] = True
    return flat.reshape(result.grid.rows, result.grid.cols)


def bitmap_to_indices(bitmap: np.ndarray) -> np.ndarray:
    """Sorted flat indices of the True cells of a visibility bitmap."""
    return np.flatnonzero(np.asarray(bitmap, dtype=bool).reshape(-1)).astype(np.int64)


def batch_masks(
    feature_sets: list[FeatureMatrix],
    config: MaskConfig,
    grids: list[PatchGrid] | None = None,
) -> list[MaskResult | DppMaskError]:
    """Generate one mask per feature set.

    Item i runs on its own stream seeded ``derived_seed(config.seed, i)``,
    so outputs do not depend on execution order and item 0 matches a single
    run with the same config. Failures are collected in place of their
    results instead of aborting the batch.
    """
    out: list[MaskResult | DppMaskError] = []
    for i, features in enumerate(feature_sets):
        rng = np.random.default_rng(derived_seed(config.seed, i))
        grid = grids[i] if grids is not None else None
        try:
            out.append(generate_mask(features, config, rng=rng, grid=grid))
        except DppMaskError as err:
            out.append(err)
    return out


def item_config(config: MaskConfig, index: int) -> MaskConfig:
    """Config whose single run reproduces batch item ``index`` exactly."""
    return replace(config, seed=derived_seed(config.seed, index))
