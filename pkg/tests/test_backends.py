import subprocess
import sys

import numpy as np
import pytest

from dppmask import FeatureMatrix, active_backend, gaussian_kernel, set_active_backend
from dppmask._backend import HAVE_NUMBA, cholesky_lower, greedy_select, warmup

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def _instances(count, seed=100):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(4, 40))
        dim = int(rng.integers(2, 12))
        f = FeatureMatrix(rng.normal(size=(n, dim)) / np.sqrt(dim))
        out.append(gaussian_kernel(f).matrix.entries)
    return out


@needs_numba
class TestBackendAgreement:
    def setup_method(self):
        warmup()

    def test_greedy_picks_identical(self):
        for L in _instances(50):
            k = max(1, L.shape[0] // 2)
            p_nb, g_nb, a_nb = greedy_select(L, k, 0.0, 1e-12, backend="numba")
            p_np, g_np, a_np = greedy_select(L, k, 0.0, 1e-12, backend="numpy")
            assert np.array_equal(p_nb, p_np)
            np.testing.assert_allclose(g_nb, g_np, rtol=1e-10, atol=1e-14)
            assert np.isnan(a_nb) == np.isnan(a_np)

    def test_greedy_thresholded_agreement(self):
        for L in _instances(20, seed=200):
            k = L.shape[0]
            p_nb, _, a_nb = greedy_select(L, k, 0.5, 1e-12, backend="numba")
            p_np, _, a_np = greedy_select(L, k, 0.5, 1e-12, backend="numpy")
            assert np.array_equal(p_nb, p_np)
            if not np.isnan(a_nb):
                assert abs(a_nb - a_np) < 1e-10

    def test_cholesky_agreement(self):
        for L in _instances(30, seed=300):
            a = L + np.eye(L.shape[0])
            f_nb, p_nb = cholesky_lower(a, 0.0, backend="numba")
            f_np, p_np = cholesky_lower(a, 0.0, backend="numpy")
            assert p_nb == p_np == -1
            np.testing.assert_allclose(f_nb, f_np, rtol=1e-12, atol=1e-15)

    def test_cholesky_failure_pivot_parity(self):
        bad = np.ones((4, 4))
        _, p_nb = cholesky_lower(bad, 0.0, backend="numba")
        _, p_np = cholesky_lower(bad, 0.0, backend="numpy")
        assert p_nb == p_np == 1


class TestBackendSelection:
    def test_active_backend_name(self):
        assert active_backend() in ("numba", "numpy")

    def test_set_round_trip(self):
        previous = set_active_backend("numpy")
        try:
            assert active_backend() == "numpy"
        finally:
            set_active_backend(previous)
        assert active_backend() == previous

    def test_invalid_name_rejected(self):
        with pytest.raises(ValueError):
            set_active_backend("gpu")

    @needs_numba
    def test_auto_prefers_numba(self):
        previous = set_active_backend("auto")
        try:
            assert active_backend() == "numba"
        finally:
            set_active_backend(previous)

    @pytest.mark.parametrize("name", ["numpy"] + (["numba"] if HAVE_NUMBA else []))
    def test_env_variable_honored(self, name):
        code = "import dppmask; print(dppmask.active_backend())"
        out = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True,
            text=True,
            env={"PATH": "/usr/bin:/bin", "DPPMASK_BACKEND": name},
        )
        assert out.returncode == 0
        assert out.stdout.strip() == name

    def test_env_invalid_name_fails_import(self):
        code = "import dppmask"
        out = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True,
            text=True,
            env={"PATH": "/usr/bin:/bin", "DPPMASK_BACKEND": "what"},
        )
        assert out.returncode != 0
        assert "DPPMASK_BACKEND" in out.stderr


def test_numpy_backend_end_to_end():
    # the fallback path must produce the same masks as the active backend
    from dppmask import MaskConfig, generate_mask

    f = FeatureMatrix(np.random.default_rng(7).normal(size=(30, 6)))
    config = MaskConfig(mask_ratio=0.5, tau=0.6, seed=5, mode="feature")
    baseline = generate_mask(f, config)
    previous = set_active_backend("numpy")
    try:
        fallback = generate_mask(f, config)
    finally:
        set_active_backend(previous)
    assert np.array_equal(baseline.visible, fallback.visible)
    assert baseline.greedy_count == fallback.greedy_count
