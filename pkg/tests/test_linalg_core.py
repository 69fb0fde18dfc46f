import json
import os
import pathlib
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privrl import _accel
from privrl.errors import NotPositiveDefinite
from privrl.linalg_core import (
    as_symmetric,
    cholesky_factor,
    has_eigen_floor,
    inv_norms_factored,
    mahalanobis_inv_norm,
    min_eigenvalue,
    operator_norm,
    psd_solve,
    rank1_update,
    weighted_norm,
)

from conftest import random_spd


class TestValidation:
    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            as_symmetric(np.zeros((2, 3)))

    def test_rejects_asymmetric_without_tolerance(self):
        a = np.array([[1.0, 2.0], [2.0 + 1e-9, 1.0]])
        with pytest.raises(ValueError):
            as_symmetric(a)
        fixed = as_symmetric(a, atol=1e-8)
        assert np.array_equal(fixed, fixed.T)

    def test_rank1_update_keeps_exact_symmetry(self):
        rng = np.random.default_rng(0)
        a = np.eye(5)
        for _ in range(50):
            rank1_update(a, rng.standard_normal(5), 0.3)
        assert np.array_equal(a, a.T)


class TestSolves:
    def test_identity_norm(self):
        x = np.array([3.0, 4.0])
        assert mahalanobis_inv_norm(np.eye(2), x) == pytest.approx(5.0)
        assert weighted_norm(np.eye(2), x) == pytest.approx(5.0)

    def test_scaled_identity(self):
        x = np.array([1.0, 0.0, 0.0])
        assert mahalanobis_inv_norm(4.0 * np.eye(3), x) == pytest.approx(0.5)

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            psd_solve(np.diag([1.0, -1.0]), np.ones(2))
        with pytest.raises(NotPositiveDefinite):
            cholesky_factor(np.zeros((3, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psd_solve(np.eye(3), np.ones(2))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 12), st.integers(0, 2**31 - 1))
    def test_solve_matches_numpy(self, d, seed):
        rng = np.random.default_rng(seed)
        a = random_spd(rng, d)
        b = rng.standard_normal(d)
        np.testing.assert_allclose(psd_solve(a, b), np.linalg.solve(a, b), rtol=1e-9, atol=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 12), st.integers(0, 2**31 - 1))
    def test_inverse_norms_match_definition(self, d, seed):
        rng = np.random.default_rng(seed)
        a = random_spd(rng, d)
        xs = rng.standard_normal((7, d))
        expect = np.sqrt(np.einsum("ij,ij->i", xs, np.linalg.solve(a, xs.T).T))
        got = inv_norms_factored(cholesky_factor(a), xs)
        np.testing.assert_allclose(got, expect, rtol=1e-9)

    def test_cauchy_schwarz_pairing(self):
        # |<x, y>| <= ||x||_{A^-1} ||y||_A: the inequality behind every bonus term
        rng = np.random.default_rng(3)
        for _ in range(200):
            a = random_spd(rng, 6)
            x, y = rng.standard_normal(6), rng.standard_normal(6)
            assert abs(x @ y) <= mahalanobis_inv_norm(a, x) * weighted_norm(a, y) * (1 + 1e-12)


class TestSpectrum:
    def test_eigen_floor(self):
        a = np.diag([2.0, 3.0, 5.0])
        assert min_eigenvalue(a) == pytest.approx(2.0)
        assert has_eigen_floor(a, 1.9)
        assert not has_eigen_floor(a, 2.1)

    def test_operator_norm_uses_magnitude(self):
        assert operator_norm(np.diag([-7.0, 2.0])) == pytest.approx(7.0)


class TestBackends:
    """The compiled and the pure-numpy kernels must agree."""

    @pytest.mark.skipif(not _accel.HAS_NUMBA, reason="numba not installed")
    def test_cholesky_and_norms(self):
        rng = np.random.default_rng(5)
        for d in (1, 4, 9):
            a = random_spd(rng, d)
            l_nb = _accel.numba_impl.cholesky(a)
            l_np = _accel.numpy_impl.cholesky(a)
            np.testing.assert_allclose(l_nb, l_np, rtol=1e-12, atol=1e-12)
            xs = rng.standard_normal((5, d))
            np.testing.assert_allclose(_accel.numba_impl.inv_norms(l_nb, xs),
                                       _accel.numpy_impl.inv_norms(l_np, xs), rtol=1e-11)
            b = rng.standard_normal(d)
            np.testing.assert_allclose(_accel.numba_impl.chol_solve(l_nb, b),
                                       _accel.numpy_impl.chol_solve(l_np, b), rtol=1e-10)

    @pytest.mark.skipif(not _accel.HAS_NUMBA, reason="numba not installed")
    def test_failure_reported_by_both(self):
        bad = np.diag([1.0, -2.0])
        assert _accel.numba_impl.cholesky(bad) is None
        assert _accel.numpy_impl.cholesky(bad) is None


def test_disable_flag_selects_numpy_backend():
    code = "import privrl; print(privrl.BACKEND)"
    env = {**os.environ, "PRIVRL_DISABLE_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_fallback_run_matches_numba_run():
    # same trace under both backends up to rounding in the regret values
    code = ("import json; from privrl.harness import config_from_dict, run_experiment; "
            "c = config_from_dict({'env': {'family': 'random-dense', 'S': 3, 'A': 2, 'H': 3, 'seed': 1}, "
            "'agent': {'algorithm': 'lsvi_ucb_batch', 'regime': 'none'}, 'K': 30, 'seeds': [0]}); "
            "print(json.dumps(run_experiment(c, workers=1)[0].cum_regret))")
    runs = []
    for flag in ("0", "1"):
        env = {**os.environ, "PRIVRL_DISABLE_NUMBA": flag}
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        runs.append(json.loads(out.stdout))
    np.testing.assert_allclose(runs[0], runs[1], atol=1e-9)


@pytest.mark.skipif(_accel.numba_impl is None, reason="numba unavailable")
def test_benchmark_script_runs():
    root = pathlib.Path(__file__).resolve().parents[1]
    out = subprocess.run([sys.executable, str(root / "benchmarks" / "bench_kernels.py"), "--repeat", "5"],
                         capture_output=True, text=True, check=True)
    assert "mixture_plan" in out.stdout
