import numpy as np

from qgmm.kernel import log_surrogate, log_target, quad_form
from qgmm.momentmodel import Dataset, MomentModel, moment_covariance, weighting_cholesky
from qgmm.prior import PriorSpec, PriorState, initial_state, log_density
from oracles import dense_log_quasi, dense_log_target


def hetero_model(n, k, rng):
    X = rng.standard_normal((n, k))
    Z = X + 0.3 * rng.standard_normal((n, k))
    y = X @ np.ones(k) + (1 + np.abs(X[:, 0])) * rng.standard_normal(n)
    return MomentModel(Dataset(y, X, Z))


NORMAL = initial_state(PriorSpec("normal"), 3)


class TestLogTarget:
    def test_at_pivot(self):
        m = hetero_model(40, 3, np.random.default_rng(42))
        ev = log_target(m, NORMAL, m.pivot)
        half = 0.5 * -np.linalg.slogdet(moment_covariance(m, m.pivot))[1]
        np.testing.assert_allclose(ev.log_target, half + log_density(NORMAL, m.pivot), rtol=1e-12)
        np.testing.assert_allclose(quad_form(m, m.pivot, ev.W_chol), 0.0, atol=1e-20)

    def test_dense_oracle_small(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal(5)
        y = 2 * x + rng.standard_normal(5)
        m = MomentModel(Dataset(y, x[:, None], x[:, None]))
        s = initial_state(PriorSpec("normal"), 1)
        ev = log_target(m, s, np.zeros(1))
        np.testing.assert_allclose(ev.log_target, dense_log_target(y, x[:, None], x[:, None], np.zeros(1)), rtol=1e-10)

    def test_dense_oracle_random(self):
        rng = np.random.default_rng(42)
        m = hetero_model(60, 3, rng)
        d = m.data
        for _ in range(10):
            th = m.pivot + rng.standard_normal(3)
            np.testing.assert_allclose(
                log_target(m, NORMAL, th).log_target, dense_log_target(d.y, d.X, d.Z, th), rtol=1e-10
            )

    def test_singular_sentinel(self):
        d = Dataset(np.ones(4), np.ones((4, 1)), np.ones((4, 1)))
        ev = log_target(MomentModel(d), initial_state(PriorSpec(), 1), np.zeros(1))
        assert ev.log_target == -np.inf and ev.singular

    def test_row_permutation(self):
        rng = np.random.default_rng(42)
        m = hetero_model(50, 3, rng)
        p = rng.permutation(50)
        d = m.data
        m2 = MomentModel(Dataset(d.y[p], d.X[p], d.Z[p]))
        th = m.pivot + 0.3 * rng.standard_normal(3)
        np.testing.assert_allclose(log_target(m, NORMAL, th).log_target, log_target(m2, NORMAL, th).log_target, rtol=1e-9)

    def test_quad_form_dense(self):
        rng = np.random.default_rng(42)
        m = hetero_model(30, 4, rng)
        th = rng.standard_normal(4)
        L = weighting_cholesky(m, th)
        mbar = m.data.Z.T @ (m.data.y - m.data.X @ th) / m.n
        ref = 0.5 * m.n * mbar @ np.linalg.inv(moment_covariance(m, th)) @ mbar
        np.testing.assert_allclose(quad_form(m, th, L), ref, rtol=1e-9)

    def test_with_prior_refresh(self):
        rng = np.random.default_rng(42)
        m = hetero_model(30, 3, rng)
        s1 = PriorState(PriorSpec("nig-hetero"), np.array([1.0, 2.0, 0.5]))
        s2 = PriorState(PriorSpec("nig-hetero"), np.array([3.0, 0.2, 1.5]))
        th = m.pivot + 0.1
        np.testing.assert_allclose(log_target(m, s1, th).with_prior(s2).log_target, log_target(m, s2, th).log_target, rtol=1e-13)


class TestSurrogate:
    def test_anchor_identity(self):
        rng = np.random.default_rng(42)
        m = hetero_model(40, 3, rng)
        th = m.pivot + 0.2 * rng.standard_normal(3)
        ev = log_target(m, NORMAL, th)
        np.testing.assert_allclose(log_surrogate(m, NORMAL, th, ev.W_chol), ev.log_target, rtol=1e-12)

    def test_at_pivot(self):
        rng = np.random.default_rng(42)
        m = hetero_model(40, 3, rng)
        th = m.pivot + 0.2 * rng.standard_normal(3)
        L = weighting_cholesky(m, th)
        ref = -np.log(np.diag(L)).sum() + log_density(NORMAL, m.pivot)
        np.testing.assert_allclose(log_surrogate(m, NORMAL, m.pivot, L), ref, rtol=1e-12)

    def test_frozen_dense_oracle(self):
        rng = np.random.default_rng(42)
        m = hetero_model(25, 3, rng)
        d = m.data
        cur = m.pivot + 0.5 * rng.standard_normal(3)
        new = m.pivot + 0.5 * rng.standard_normal(3)
        W = np.linalg.inv(moment_covariance(m, cur))
        mbar = d.Z.T @ (d.y - d.X @ new) / m.n
        ref = 0.5 * np.linalg.slogdet(W)[1] - 0.5 * m.n * mbar @ W @ mbar - 0.5 * new @ new
        np.testing.assert_allclose(log_surrogate(m, NORMAL, new, weighting_cholesky(m, cur)), ref, rtol=1e-10)

    def test_dense_quasi_agrees_with_target(self):
        rng = np.random.default_rng(7)
        m = hetero_model(25, 2, rng)
        th = rng.standard_normal(2)
        d = m.data
        s = initial_state(PriorSpec(), 2)
        np.testing.assert_allclose(log_target(m, s, th).log_quasi, dense_log_quasi(d.y, d.X, d.Z, th), rtol=1e-10)
