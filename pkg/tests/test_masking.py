import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dppmask import (
    DppMaskError,
    FeatureMatrix,
    InvalidConfig,
    MaskConfig,
    NonDivisibleImage,
    PatchGrid,
    batch_masks,
    bitmap_to_indices,
    derived_seed,
    generate_mask,
    mask_image,
    mask_to_bitmap,
    patchify,
)
from dppmask.masking import SEED_STRIDE, feature_grid, item_config

import oracles
from synthetic import QUADRANT_FG_CELLS, make_quadrant_scene


class TestPatchGrid:
    def test_exact_tiling(self):
        g = PatchGrid(224, 224, 16, 3)
        assert (g.rows, g.cols, g.n_patches) == (14, 14, 196)

    def test_non_divisible_rejected_with_padding(self):
        with pytest.raises(NonDivisibleImage) as exc:
            PatchGrid(30, 47, 16, 1)
        assert exc.value.pad_h == 2
        assert exc.value.pad_w == 1

    def test_bad_channels(self):
        with pytest.raises(InvalidConfig):
            PatchGrid(16, 16, 16, 2)


class TestPatchify:
    def test_two_by_two_columns(self):
        # [[0,255],[0,255]] with patch 1: rows are 0, 1, 0, 1 after scaling
        img = np.array([[0, 255], [0, 255]], dtype=np.uint8)
        grid, f = patchify(img, 1)
        assert (grid.rows, grid.cols, grid.channels) == (2, 2, 1)
        assert np.array_equal(f.rows, [[0.0], [1.0], [0.0], [1.0]])

    def test_constant_image_identical_rows(self):
        img = np.full((32, 32), 77, dtype=np.uint8)
        _, f = patchify(img, 4)
        assert f.count == 64
        assert np.all(f.rows == 77.0 / 255.0)

    def test_standard_geometry(self):
        img = np.zeros((224, 224, 3), dtype=np.uint8)
        grid, f = patchify(img, 16)
        assert (grid.rows, grid.cols) == (14, 14)
        assert (f.count, f.dim) == (196, 768)

    def test_row_order_is_grid_row_major(self):
        # patch (i, j) filled with value i*cols + j must land in row i*cols + j
        img = np.zeros((8, 12), dtype=np.uint8)
        for i in range(2):
            for j in range(3):
                img[i * 4 : (i + 1) * 4, j * 4 : (j + 1) * 4] = i * 3 + j
        _, f = patchify(img, 4)
        for r in range(6):
            assert np.all(f.rows[r] == r / 255.0)

    def test_patch_flattening_is_row_major(self):
        img = np.arange(16, dtype=np.uint8).reshape(4, 4)
        _, f = patchify(img, 4)
        assert np.array_equal(f.rows[0], np.arange(16) / 255.0)

    def test_non_divisible(self):
        with pytest.raises(NonDivisibleImage):
            patchify(np.zeros((30, 32), dtype=np.uint8), 16)

    def test_channels_preserved(self):
        img = np.zeros((4, 4, 3), dtype=np.uint8)
        img[:, :, 1] = 255
        _, f = patchify(img, 2)
        assert f.dim == 12
        assert np.array_equal(f.rows[0].reshape(4, 3)[:, 1], np.ones(4))


class TestMaskConfig:
    def test_defaults(self):
        c = MaskConfig(mask_ratio=0.75, tau=0.8)
        assert (c.epsilon, c.patch_size, c.seed, c.mode) == (1.0, 16, 0, "pixel")
        assert (c.mask_ratio_jitter, c.position_weight) == (0.0, 0.0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"mask_ratio": 1.0},
            {"mask_ratio": -0.1},
            {"tau": -0.01},
            {"tau": 1.01},
            {"epsilon": 0.0},
            {"patch_size": 0},
            {"seed": -1},
            {"seed": 1 << 64},
            {"mode": "token"},
            {"mask_ratio_jitter": 1.0},
            {"position_weight": -1.0},
        ],
    )
    def test_validation(self, kwargs):
        base = {"mask_ratio": 0.75, "tau": 0.8}
        base.update(kwargs)
        with pytest.raises(InvalidConfig):
            MaskConfig(**base)

    def test_visible_count_rounds_half_up(self):
        c = MaskConfig(mask_ratio=0.75, tau=0.0)
        assert c.visible_count(196) == 49
        # 0.25 * 6 = 1.5 rounds up to 2
        assert c.visible_count(6) == 2

    def test_visible_count_must_be_positive(self):
        c = MaskConfig(mask_ratio=0.9, tau=0.0)
        with pytest.raises(InvalidConfig):
            c.visible_count(2)


@settings(max_examples=80, deadline=None)
@given(
    ratio=st.floats(0.1, 0.9, allow_nan=False),
    n=st.integers(4, 400),
)
def test_visible_count_formula(ratio, n):
    c = MaskConfig(mask_ratio=ratio, tau=0.5)
    k = c.visible_count(n)
    assert k == int(np.floor((1.0 - ratio) * n + 0.5))
    assert 1 <= k <= n


class TestGenerateMask:
    def test_deterministic_for_config(self):
        rng = np.random.default_rng(0)
        f = FeatureMatrix(rng.normal(size=(24, 6)))
        config = MaskConfig(mask_ratio=0.5, tau=0.7, seed=123, mode="feature")
        a = generate_mask(f, config)
        b = generate_mask(f, config)
        assert np.array_equal(a.visible, b.visible)
        assert np.array_equal(a.masked, b.masked)
        assert a.greedy_count == b.greedy_count
        assert a.config == b.config

    def test_partition_invariants(self):
        rng = np.random.default_rng(1)
        f = FeatureMatrix(rng.normal(size=(30, 5)))
        config = MaskConfig(mask_ratio=0.6, tau=0.5, seed=9, mode="feature")
        result = generate_mask(f, config)
        k = config.visible_count(30)
        assert len(result.visible) == k
        assert len(result.masked) == 30 - k
        merged = np.concatenate([result.visible, result.masked])
        assert np.array_equal(np.sort(merged), np.arange(30))
        assert np.array_equal(result.visible, np.sort(result.visible))
        assert np.array_equal(result.masked, np.sort(result.masked))

    def test_standard_geometry_gives_49(self):
        img = np.random.default_rng(2).integers(0, 256, (224, 224, 3)).astype(np.uint8)
        result = mask_image(img, MaskConfig(mask_ratio=0.75, tau=0.8, seed=3))
        assert len(result.visible) == 49
        assert result.grid.n_patches == 196

    def test_feature_mode_flat_grid(self):
        f = FeatureMatrix(np.random.default_rng(3).normal(size=(10, 4)))
        result = generate_mask(f, MaskConfig(mask_ratio=0.5, tau=0.5, mode="feature"))
        assert (result.grid.rows, result.grid.cols) == (1, 10)

    def test_grid_row_count_mismatch(self):
        f = FeatureMatrix(np.ones((4, 2)))
        grid = PatchGrid(16, 48, 16, 1)  # 3 patches != 4 rows
        with pytest.raises(InvalidConfig):
            generate_mask(f, MaskConfig(mask_ratio=0.5, tau=0.5), grid=grid)

    def test_tau_one_ignores_features(self):
        # fully random sampling must not depend on feature content
        config = MaskConfig(mask_ratio=0.5, tau=1.0, seed=42, mode="feature")
        rng = np.random.default_rng(5)
        a = generate_mask(FeatureMatrix(rng.normal(size=(12, 3))), config)
        b = generate_mask(FeatureMatrix(np.ones((12, 3))), config)
        assert np.array_equal(a.visible, b.visible)
        assert a.greedy_count == b.greedy_count == 0

    def test_foreground_survives_at_tau_08(self):
        # four near-orthogonal foreground patches always enter the visible set
        img = make_quadrant_scene()
        for seed in range(5):
            config = MaskConfig(mask_ratio=0.5, tau=0.8, seed=seed)
            result = mask_image(img, config)
            assert set(QUADRANT_FG_CELLS) <= set(result.visible.tolist())

    def test_position_weight_changes_selection_on_flat_image(self):
        img = np.full((64, 64), 120, dtype=np.uint8)
        grid, f = patchify(img, 16)
        flat = generate_mask(f, MaskConfig(mask_ratio=0.5, tau=0.0, seed=1), grid=grid)
        spread = generate_mask(
            f,
            MaskConfig(mask_ratio=0.5, tau=0.0, seed=1, position_weight=4.0),
            grid=grid,
        )
        # identical patches leave greedy nothing to do; coordinates make the
        # kernel nontrivial again
        assert flat.greedy_count == 1
        assert spread.greedy_count == 8
        assert not np.array_equal(flat.visible, spread.visible)

    def test_mask_ratio_jitter_varies_k(self):
        f = FeatureMatrix(np.random.default_rng(6).normal(size=(40, 4)))
        config = MaskConfig(
            mask_ratio=0.5, tau=1.0, seed=0, mode="feature", mask_ratio_jitter=0.2
        )
        sizes = {
            len(generate_mask(f, config, rng=np.random.default_rng(s)).visible)
            for s in range(30)
        }
        assert len(sizes) > 1
        assert all(12 <= k <= 28 for k in sizes)

    def test_no_jitter_fixes_k(self):
        f = FeatureMatrix(np.random.default_rng(7).normal(size=(40, 4)))
        config = MaskConfig(mask_ratio=0.5, tau=1.0, seed=0, mode="feature")
        sizes = {
            len(generate_mask(f, config, rng=np.random.default_rng(s)).visible)
            for s in range(10)
        }
        assert sizes == {20}


class TestBitmap:
    def test_single_visible(self):
        grid = PatchGrid(2, 2, 1, 1)
        config = MaskConfig(mask_ratio=0.7, tau=0.0)
        from dppmask import MaskResult

        result = MaskResult(
            grid=grid,
            visible=np.array([0], dtype=np.int64),
            masked=np.array([1, 2, 3], dtype=np.int64),
            greedy_count=1,
            config=config,
        )
        assert np.array_equal(mask_to_bitmap(result), [[True, False], [False, False]])

    def test_round_trip(self):
        rng = np.random.default_rng(8)
        f = FeatureMatrix(rng.normal(size=(24, 5)))
        config = MaskConfig(mask_ratio=0.5, tau=0.6, seed=2, mode="feature")
        grid = PatchGrid(4, 6, 1, 1)
        result = generate_mask(f, config, grid=grid)
        bitmap = mask_to_bitmap(result)
        assert bitmap.shape == (4, 6)
        assert bitmap.sum() == len(result.visible)
        assert np.array_equal(bitmap_to_indices(bitmap), result.visible)


class TestBatch:
    def test_item_zero_matches_single_run(self):
        rng = np.random.default_rng(9)
        sets = [FeatureMatrix(rng.normal(size=(16, 4))) for _ in range(3)]
        config = MaskConfig(mask_ratio=0.5, tau=0.7, seed=55, mode="feature")
        batch = batch_masks(sets, config)
        single = generate_mask(sets[0], config)
        assert np.array_equal(batch[0].visible, single.visible)

    def test_items_match_derived_single_runs(self):
        rng = np.random.default_rng(10)
        sets = [FeatureMatrix(rng.normal(size=(16, 4))) for _ in range(4)]
        config = MaskConfig(mask_ratio=0.5, tau=0.7, seed=77, mode="feature")
        batch = batch_masks(sets, config)
        for i, result in enumerate(batch):
            solo = generate_mask(sets[i], item_config(config, i))
            assert np.array_equal(result.visible, solo.visible)

    def test_derived_seed_values(self):
        assert derived_seed(5, 0) == 5
        assert derived_seed(5, 1) == (5 + SEED_STRIDE) % 2**64
        assert derived_seed(2**64 - 1, 2) == (2**64 - 1 + 2 * SEED_STRIDE) % 2**64

    def test_identical_inputs_get_different_masks(self):
        f = FeatureMatrix(np.random.default_rng(11).normal(size=(20, 4)))
        config = MaskConfig(mask_ratio=0.5, tau=1.0, seed=4, mode="feature")
        batch = batch_masks([f, f], config)
        assert not np.array_equal(batch[0].visible, batch[1].visible)

    def test_empty_batch(self):
        config = MaskConfig(mask_ratio=0.5, tau=0.5)
        assert batch_masks([], config) == []

    def test_shuffle_diversity_at_tau_zero(self):
        # same image 8 times: per-item shuffles land different random fills
        img = make_quadrant_scene()
        grid, f = patchify(img, 16)
        config = MaskConfig(mask_ratio=0.5, tau=0.0, seed=1)
        batch = batch_masks([f] * 8, config, grids=[grid] * 8)
        assert oracles.mean_pairwise_jaccard([r.visible for r in batch]) > 0.0

    def test_errors_collected_not_raised(self):
        rng = np.random.default_rng(12)
        good = FeatureMatrix(rng.normal(size=(16, 4)))
        bad = FeatureMatrix(rng.normal(size=(9, 4)))  # mismatches the grid
        config = MaskConfig(mask_ratio=0.5, tau=0.5, seed=3, mode="feature")
        grid = PatchGrid(1, 16, 1, 1)
        out = batch_masks([good, bad, good], config, grids=[grid] * 3)
        assert isinstance(out[0].visible, np.ndarray)
        assert isinstance(out[1], DppMaskError)
        assert isinstance(out[2].visible, np.ndarray)

    def test_order_preserved(self):
        rng = np.random.default_rng(13)
        sets = [FeatureMatrix(rng.normal(size=(n, 3))) for n in (8, 12, 16)]
        config = MaskConfig(mask_ratio=0.5, tau=1.0, seed=6, mode="feature")
        batch = batch_masks(sets, config)
        assert [r.grid.n_patches for r in batch] == [8, 12, 16]


def test_feature_grid_shape():
    g = feature_grid(23)
    assert (g.rows, g.cols, g.n_patches, g.patch_size) == (1, 23, 23, 1)
