import numpy as np
import pytest
from scipy import integrate, stats

from vaenmf.errors import ConfigError
from vaenmf.samplers import gig_mean, sample_gamma, sample_gig

from oracles import quadrature_moments


class TestGamma:
    def test_rate_parametrisation(self):
        x = sample_gamma(3.0, 2.0, np.random.default_rng(0), size=200_000)
        assert abs(x.mean() - 1.5) <= 3 * np.sqrt(3.0 / 4.0 / 200_000)

    def test_rejects_non_positive(self):
        with pytest.raises(ConfigError):
            sample_gamma(0.0, 1.0, np.random.default_rng(0))
        with pytest.raises(ConfigError):
            sample_gamma(1.0, -1.0, np.random.default_rng(0))


class TestGig:
    @pytest.mark.parametrize(
        "gamma,rho,tau",
        [
            (1.0, 1.0, 1.0),
            (0.5, 2.0, 1e-3),  # nearly Gamma
            (-2.5, 0.05, 3.0),  # inverse-Gamma-like, heavy right tail
            (1.0, 50.0, 200.0),  # very concentrated
            (30.0, 1.0, 0.5),  # large shape
            (-0.3, 1e-4, 1e-4),  # tiny omega, negative shape
            (1.0, 1e3, 1e-8),
        ],
    )
    def test_mean_matches_quadrature(self, gamma, rho, tau):
        n = 50_000
        x = sample_gig(np.full(n, gamma), rho, tau, np.random.default_rng(11))
        mean, var = quadrature_moments(gamma, rho, tau)
        assert np.all(x > 0)
        assert abs(x.mean() - mean) <= 3.5 * np.sqrt(var / n)

    def test_variance_matches_quadrature(self):
        n = 100_000
        x = sample_gig(np.full(n, 2.0), 1.5, 0.7, np.random.default_rng(4))
        _, var = quadrature_moments(2.0, 1.5, 0.7)
        np.testing.assert_allclose(x.var(), var, rtol=0.03)

    def test_bessel_mean_agrees_with_quadrature(self):
        for params in [(1.0, 1.0, 1.0), (-1.5, 0.3, 2.0), (4.0, 2.0, 0.01)]:
            np.testing.assert_allclose(gig_mean(*params), quadrature_moments(*params)[0], rtol=1e-8)

    def test_distribution_ks(self):
        gamma, rho, tau = 0.7, 1.3, 0.4
        x = sample_gig(np.full(20_000, gamma), rho, tau, np.random.default_rng(2))
        norm = integrate.quad(lambda v: v ** (gamma - 1) * np.exp(-rho * v - tau / v), 0, np.inf)[0]

        def cdf(v):
            return np.array([integrate.quad(lambda s: s ** (gamma - 1) * np.exp(-rho * s - tau / s), 0, t)[0]
                             for t in np.atleast_1d(v)]) / norm

        assert stats.kstest(x[:3000], cdf).pvalue > 0.01

    def test_tau_zero_is_gamma(self):
        n = 10_000
        x = sample_gig(np.full(n, 2.5), 1.7, 0.0, np.random.default_rng(0))
        y = sample_gamma(2.5, 1.7, np.random.default_rng(1), size=n)
        assert stats.ks_2samp(x, y).pvalue > 0.01
        assert stats.kstest(x, stats.gamma(2.5, scale=1 / 1.7).cdf).pvalue > 0.01

    def test_rejection_path_approaches_gamma(self):
        # the Devroye path (tau > 0) must agree with the Gamma limit
        n = 10_000
        x = sample_gig(np.full(n, 2.5), 1.7, 1e-9, np.random.default_rng(5))
        y = sample_gamma(2.5, 1.7, np.random.default_rng(6), size=n)
        assert stats.ks_2samp(x, y).pvalue > 0.01

    def test_broadcast_and_scalar(self):
        rng = np.random.default_rng(0)
        assert isinstance(sample_gig(1.0, 1.0, 1.0, rng), float)
        out = sample_gig(np.ones((3, 4)), np.full((3, 1), 2.0), 0.5, rng)
        assert out.shape == (3, 4) and np.all(out > 0)

    def test_mixed_degenerate_entries(self):
        rng = np.random.default_rng(0)
        out = sample_gig(np.array([1.0, 1.0]), 1.0, np.array([0.0, 1.0]), rng)
        assert out.shape == (2,) and np.all(out > 0)

    def test_reproducible(self):
        a = sample_gig(np.full(100, 0.5), 1.0, 2.0, np.random.default_rng(3))
        b = sample_gig(np.full(100, 0.5), 1.0, 2.0, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("gamma,rho,tau", [(1.0, 0.0, 1.0), (1.0, 1.0, -1.0), (-1.0, 1.0, 0.0),
                                               (np.nan, 1.0, 1.0)])
    def test_invalid(self, gamma, rho, tau):
        with pytest.raises(ConfigError):
            sample_gig(gamma, rho, tau, np.random.default_rng(0))
