import math

import numpy as np
import pytest
from scipy import stats

from qgmm.prior import (
    PriorFamily,
    PriorSpec,
    PriorState,
    gibbs_update,
    initial_state,
    inv_gamma_logpdf,
    log_density,
    precision,
)

NORMAL = PriorSpec(PriorFamily.NORMAL)
HOMO = PriorSpec(PriorFamily.NIG_HOMO)
HETERO = PriorSpec(PriorFamily.NIG_HETERO)


class TestSpec:
    def test_defaults(self):
        assert (HOMO.nu1, HOMO.nu2) == (2.0, 1.0)

    def test_invalid(self):
        with pytest.raises(ValueError):
            PriorSpec("nig-homo", nu1=0.0)
        with pytest.raises(ValueError):
            PriorSpec("laplace")

    def test_state_validation(self):
        with pytest.raises(ValueError):
            PriorState(HOMO, np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            PriorState(HETERO, np.array([1.0, -1.0]))
        with pytest.raises(ValueError):
            PriorState(NORMAL, np.array([1.0]))

    def test_initial_state(self):
        assert initial_state(NORMAL, 3).tau.size == 0
        np.testing.assert_array_equal(initial_state(HOMO, 3).tau, [1.0])
        np.testing.assert_array_equal(initial_state(HETERO, 3).tau, [1.0, 1.0, 1.0])
        np.testing.assert_array_equal(initial_state(PriorSpec("nig-homo", 0.5, 1.0), 2).tau, [1.0])
        np.testing.assert_allclose(initial_state(PriorSpec("nig-homo", 3.0, 4.0), 2).tau, [2.0])


class TestLogDensity:
    def test_normal(self):
        s = initial_state(NORMAL, 2)
        assert log_density(s, np.zeros(2)) == 0.0
        assert log_density(s, np.ones(2)) == -1.0

    def test_hetero_hand(self):
        s = PriorState(HETERO, np.array([1.0, 4.0]))
        np.testing.assert_allclose(log_density(s, np.array([2.0, 2.0])), -2.5 - 0.5 * math.log(4.0), rtol=1e-15)

    def test_homo_matches_general_form(self):
        s = PriorState(HOMO, np.array([2.5]))
        th = np.array([0.3, -1.2, 2.0])
        Q = precision(s, 3)
        ref = -0.5 * th @ Q @ th + 0.5 * np.linalg.slogdet(Q)[1]
        np.testing.assert_allclose(log_density(s, th), ref, rtol=1e-13)

    def test_difference_depends_on_Q_only(self):
        rng = np.random.default_rng(42)
        s = PriorState(HETERO, rng.uniform(0.2, 3.0, 4))
        a, b = rng.standard_normal(4), rng.standard_normal(4)
        Q = precision(s, 4)
        np.testing.assert_allclose(log_density(s, a) - log_density(s, b), -0.5 * (a @ Q @ a - b @ Q @ b), rtol=1e-12)


class TestPrecision:
    def test_families(self):
        np.testing.assert_array_equal(precision(initial_state(NORMAL, 3), 3), np.eye(3))
        np.testing.assert_array_equal(precision(PriorState(HOMO, np.array([2.0])), 2), np.diag([0.5, 0.5]))
        np.testing.assert_array_equal(precision(PriorState(HETERO, np.array([0.5, 2.0])), 2), np.diag([2.0, 0.5]))


class TestGibbs:
    def test_normal_unchanged(self):
        s = initial_state(NORMAL, 3)
        assert gibbs_update(s, np.ones(3), np.random.default_rng(42)) is s

    def test_homo_mean(self):
        rng = np.random.default_rng(42)
        s = initial_state(HOMO, 5)
        theta = np.array([2.0, 0.0, 0.0, 0.0, 0.0])  # sum of squares 4
        draws = np.array([gibbs_update(s, theta, rng).tau[0] for _ in range(100_000)])
        a, b = 4.5, 3.0
        mean = b / (a - 1)
        se = math.sqrt(b**2 / ((a - 1) ** 2 * (a - 2))) / math.sqrt(draws.size)
        assert abs(draws.mean() - mean) < 3 * se

    def test_hetero_quantiles(self):
        rng = np.random.default_rng(42)
        s = initial_state(HETERO, 4)
        draws = np.concatenate([gibbs_update(s, np.zeros(4), rng).tau for _ in range(25_000)])
        ref = stats.invgamma(2.5, scale=1.0)
        qs = np.array([0.1, 0.25, 0.5, 0.75, 0.9])
        np.testing.assert_allclose(np.quantile(draws, qs), ref.ppf(qs), rtol=0.03)

    @pytest.mark.parametrize("family", [PriorFamily.NIG_HOMO, PriorFamily.NIG_HETERO])
    def test_conditional_cdf_against_grid(self, family):
        # Unnormalised conditional: IG prior density times N(theta | 0, tau).
        spec = PriorSpec(family)
        theta = np.array([1.3]) if family is PriorFamily.NIG_HETERO else np.array([1.3, -0.4, 0.8])
        k = theta.size
        rng = np.random.default_rng(42)
        s = initial_state(spec, k)
        draws = np.array([gibbs_update(s, theta, rng).tau[0] for _ in range(100_000)])
        grid = np.linspace(1e-3, 40.0, 200_001)
        logc = inv_gamma_logpdf(grid, spec.nu1, spec.nu2)
        logc += -0.5 * k * np.log(grid) - 0.5 * (theta @ theta) / grid
        dens = np.exp(logc - logc.max())
        cdf = np.cumsum(dens)
        cdf /= cdf[-1]
        emp = np.searchsorted(np.sort(draws), grid, side="right") / draws.size
        assert np.max(np.abs(emp - cdf)) < 0.01

    def test_inv_gamma_logpdf(self):
        x = np.array([0.3, 1.0, 4.0])
        np.testing.assert_allclose(inv_gamma_logpdf(x, 2.5, 1.5), stats.invgamma(2.5, scale=1.5).logpdf(x), rtol=1e-12)
