import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qgmm import linalg


def random_spd(k, rng, cond=10.0):
    A = rng.standard_normal((k, k))
    return A @ A.T + k / cond * np.eye(k)


class TestCholesky:
    def test_reconstructs(self):
        rng = np.random.default_rng(42)
        a = random_spd(5, rng)
        L = linalg.cholesky(a)
        np.testing.assert_allclose(L @ L.T, a, atol=1e-12)
        assert np.allclose(L, np.tril(L))

    def test_rejects_indefinite(self):
        with pytest.raises(linalg.NotPositiveDefinite):
            linalg.cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert linalg.try_cholesky(np.array([[1.0, 2.0], [2.0, 1.0]])) is None

    def test_jitter_rescues_semidefinite(self):
        v = np.array([1.0, 2.0, 3.0])
        a = np.outer(v, v)
        L = linalg.jittered_cholesky(a)
        lam = np.trace(a) / 3
        np.testing.assert_allclose(L @ L.T, a, atol=1e-6 * lam)

    def test_jitter_gives_up_on_zero_matrix(self):
        with pytest.raises(linalg.NotPositiveDefinite):
            linalg.jittered_cholesky(np.zeros((3, 3)))

    def test_jitter_gives_up_on_negative_definite(self):
        with pytest.raises(linalg.NotPositiveDefinite):
            linalg.jittered_cholesky(-np.eye(2) + 1e-3)

    def test_solves_and_logdet(self):
        rng = np.random.default_rng(42)
        a = random_spd(4, rng)
        L = linalg.cholesky(a)
        b = rng.standard_normal(4)
        np.testing.assert_allclose(linalg.cho_solve(L, b), np.linalg.solve(a, b), rtol=1e-10)
        np.testing.assert_allclose(linalg.solve_lower(L, b), np.linalg.solve(L, b), rtol=1e-10)
        np.testing.assert_allclose(linalg.solve_lower_t(L, b), np.linalg.solve(L.T, b), rtol=1e-10)
        np.testing.assert_allclose(linalg.logdet_from_chol(L), np.linalg.slogdet(a)[1], rtol=1e-12)


class TestRankOneUpdate:
    @pytest.mark.parametrize("beta", [0.7, -0.2, 2.0])
    def test_matches_dense(self, beta):
        rng = np.random.default_rng(42)
        a = random_spd(6, rng)
        L = linalg.cholesky(a)
        v = 0.5 * rng.standard_normal(6)
        L2 = linalg.chol_rank_one_update(L, v, beta)
        np.testing.assert_allclose(L2 @ L2.T, a + beta * np.outer(v, v), atol=1e-12)
        assert np.all(np.diag(L2) > 0)
        assert np.allclose(L2, np.tril(L2))

    def test_downdate_to_indefinite_raises(self):
        L = np.eye(2)
        with pytest.raises(linalg.NotPositiveDefinite):
            linalg.chol_rank_one_update(L, np.array([1.0, 0.0]), -1.5)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.floats(-0.5, 5.0), st.integers(0, 2**32 - 1))
    def test_property(self, k, beta, seed):
        rng = np.random.default_rng(seed)
        a = random_spd(k, rng)
        L = linalg.cholesky(a)
        # Bound |v|^2 so a downdate by beta >= -0.5 stays positive definite.
        lam_min = np.linalg.eigvalsh(a)[0]
        v = rng.standard_normal(k)
        v *= np.sqrt(lam_min) / np.linalg.norm(v)
        L2 = linalg.chol_rank_one_update(L, v, beta)
        np.testing.assert_allclose(L2 @ L2.T, a + beta * np.outer(v, v), atol=1e-9 * np.abs(a).max())


class TestGaussianDensity:
    def test_matches_scipy(self):
        from scipy.stats import multivariate_normal

        rng = np.random.default_rng(42)
        P = random_spd(3, rng)
        R = linalg.cholesky(P)
        mean = rng.standard_normal(3)
        x = rng.standard_normal(3)
        ref = multivariate_normal(mean, np.linalg.inv(P)).logpdf(x)
        np.testing.assert_allclose(linalg.mvn_logpdf_prec(x, mean, R), ref, rtol=1e-12)
