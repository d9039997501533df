import numpy as np
import pytest
from scipy import stats

from basics.base_model import Dataset
from basics.errors import ConfigError, NumericalError, SupportError
from data_gen.datasets import gaussian_data, linreg_data
from src.conjugate import bern_log_c, ng_log_c, nig_log_c_data, pois_log_c
from src.quadrature import QuadratureConfig, normalise_density_on_interval, quad_log_c_1d, quad_log_c_2d

ORACLE_POINTS = [0.05, 0.25, 0.5, 0.75, 1.0]
LOOSE = QuadratureConfig(abs_tol=1e-8, rel_tol=1e-8)


class TestOracleAgreement:
    """The quadrature oracle against every closed form."""

    @pytest.mark.parametrize('a0', ORACLE_POINTS)
    def test_bernoulli(self, a0, bernoulli, bernoulli_data):
        assert quad_log_c_1d(bernoulli, bernoulli_data, a0) == pytest.approx(bern_log_c(a0, 20, 100), abs=1e-6)

    @pytest.mark.parametrize('a0', ORACLE_POINTS)
    def test_poisson(self, a0, poisson, poisson_data_200):
        assert quad_log_c_1d(poisson, poisson_data_200, a0) == pytest.approx(
            pois_log_c(a0, poisson_data_200, 2.0, 2.0), abs=1e-6)

    def test_native_domain_agrees(self, bernoulli, bernoulli_data):
        cfg = QuadratureConfig(domain='native')
        assert quad_log_c_1d(bernoulli, bernoulli_data, 0.5, cfg) == pytest.approx(bern_log_c(0.5, 20, 100), abs=1e-6)

    @pytest.mark.parametrize('a0', ORACLE_POINTS)
    def test_normal_gamma(self, a0, normal_gamma):
        data = gaussian_data(np.random.default_rng(7), n=50, mu=-0.1, tau=1.0)
        assert quad_log_c_2d(normal_gamma, data, a0, LOOSE) == pytest.approx(
            ng_log_c(a0, data, 0.0, 5.0, 1.0, 1.0), abs=1e-4)

    def test_normal_gamma_sharp_precision(self, normal_gamma, gaussian_data_50):
        assert quad_log_c_2d(normal_gamma, gaussian_data_50, 1.0, LOOSE) == pytest.approx(
            ng_log_c(1.0, gaussian_data_50, 0.0, 5.0, 1.0, 1.0), abs=1e-4)

    def test_single_covariate_regression(self, nig):
        data = linreg_data(np.random.default_rng(3), n=40, beta=[0.7], sigma2=2.0)
        assert quad_log_c_2d(nig, data, 0.6, LOOSE) == pytest.approx(
            nig_log_c_data(0.6, data, 0.0, 1.5, 0.5, 2.0), abs=1e-4)

    def test_tolerance_change_stays_within_the_error_budget(self, bernoulli, bernoulli_data):
        default = quad_log_c_1d(bernoulli, bernoulli_data, 0.75)
        loose = quad_log_c_1d(bernoulli, bernoulli_data, 0.75, LOOSE)
        assert loose == pytest.approx(default, abs=1e-7)


class TestDimensionChecks:
    def test_1d_rejects_two_parameters(self, normal_gamma, gaussian_data_50):
        with pytest.raises(SupportError):
            quad_log_c_1d(normal_gamma, gaussian_data_50, 0.5)

    def test_2d_rejects_one_parameter(self, bernoulli, bernoulli_data):
        with pytest.raises(SupportError):
            quad_log_c_2d(bernoulli, bernoulli_data, 0.5)


class TestQuadratureConfig:
    @pytest.mark.parametrize('kwargs', [{'abs_tol': 0.0}, {'rel_tol': -1.0}, {'max_subdivisions': 0},
                                        {'domain': 'polar'}, {'K_quad': 1}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            QuadratureConfig(**kwargs)

    def test_from_hparams(self):
        cfg = QuadratureConfig.from_hparams({'quadrature': {'K_quad': 501}})
        assert cfg.K_quad == 501
        assert cfg.abs_tol == 1e-10


class TestNormaliseDensity:
    def test_beta_density(self):
        log_norm, table = normalise_density_on_interval(lambda a: stats.beta.logpdf(a, 2.0, 5.0), 0.0, 1.0, 10001)
        assert log_norm == pytest.approx(0.0, abs=1e-6)
        assert table.mean() == pytest.approx(2.0 / 7.0, abs=1e-6)
        assert table.cdf[0] == 0.0
        assert table.cdf[-1] == 1.0
        assert np.all(np.diff(table.cdf) >= 0)
        assert table.quantile(0.5) == pytest.approx(stats.beta.ppf(0.5, 2.0, 5.0), abs=1e-4)

    def test_unnormalised_input(self):
        log_norm, table = normalise_density_on_interval(lambda a: np.zeros_like(a) + 3.0, 0.0, 2.0, 1001)
        assert log_norm == pytest.approx(3.0 + np.log(2.0))
        np.testing.assert_allclose(table.density, 0.5)

    def test_divergent_endpoints_get_zero_mass(self):
        _, table = normalise_density_on_interval(lambda a: stats.beta.logpdf(a, 0.5, 0.5), 0.0, 1.0, 20001)
        assert table.log_density[0] == -np.inf
        assert table.interval(0.95)[0] > 0.0

    def test_interior_nan_is_an_error(self):
        def log_density(a):
            out = np.zeros_like(a)
            out[len(a) // 2] = np.nan
            return out
        with pytest.raises(NumericalError):
            normalise_density_on_interval(log_density, 0.0, 1.0, 101)

    def test_bad_interval(self):
        with pytest.raises(SupportError):
            normalise_density_on_interval(lambda a: a, 1.0, 1.0)

    def test_ks_distance_of_exact_draws(self, rng):
        _, table = normalise_density_on_interval(lambda a: stats.beta.logpdf(a, 3.0, 2.0), 0.0, 1.0, 10001)
        draws = rng.beta(3.0, 2.0, size=4000)
        assert table.ks_distance(draws) < 0.05
        assert table.ks_distance(np.full(100, 0.01)) > 0.9


def test_scenario_one_marginal_interval(bernoulli):
    from src.posterior import A0Prior, exact_marginal_a0
    D0, D = Dataset.from_counts(20, 100), Dataset.from_counts(20, 100)
    table = exact_marginal_a0(bernoulli, D0, D, A0Prior(1.0, 1.0))
    median = float(table.quantile(0.5))
    assert 0.07 < median < 0.98
