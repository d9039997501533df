import numpy as np
import pytest

from basics.base_model import Dataset, PowerPriorTarget
from basics.errors import ConfigError, NumericalError, SupportError
from src.bridge import BridgeConfig, bridge_log_c, fit_proposal
from src.conjugate import bern_log_c, nig_log_c_data
from src.mcmc import ChainConfig, ChainOutput, chain_rng, sample_power_posterior


def chain_output(draws):
    return ChainOutput(draws=draws, log_likelihood_trace=np.zeros(draws.shape[:2]), acceptance_rate=1.0)


class TestBridgeConfig:
    @pytest.mark.parametrize('kwargs', [{'tol': 0.0}, {'max_iter': 0}, {'proposal_draws': 1}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            BridgeConfig(**kwargs)

    def test_from_hparams(self):
        assert BridgeConfig.from_hparams({'bridge': {'tol': 1e-8}}).tol == 1e-8
        assert BridgeConfig.from_hparams({}).max_iter == 1000


class TestFitProposal:
    def test_standard_normal_moments(self, logistic, rng):
        n = 4000
        proposal = fit_proposal(chain_output(rng.standard_normal((4, n // 4, 2))), logistic)
        np.testing.assert_array_less(np.abs(proposal.mean), 3 / np.sqrt(n))
        np.testing.assert_allclose(proposal.covariance, np.eye(2), atol=3 * np.sqrt(2 / n))

    def test_too_few_draws(self, logistic, rng):
        with pytest.raises(SupportError):
            fit_proposal(chain_output(rng.standard_normal((2, 1, 2))), logistic)

    def test_identical_draws(self, logistic):
        with pytest.raises(NumericalError):
            fit_proposal(chain_output(np.ones((2, 50, 2))), logistic)

    def test_sample_shape(self, logistic, rng):
        proposal = fit_proposal(chain_output(rng.standard_normal((2, 100, 2))), logistic)
        assert proposal.sample(rng, 7).shape == (7, 2)
        assert proposal.log_density(np.zeros((3, 2))).shape == (3,)


class TestBridgeEstimate:
    def test_bernoulli(self, bernoulli, bernoulli_data):
        target = PowerPriorTarget(bernoulli, bernoulli_data, 0.5)
        out = sample_power_posterior(target, ChainConfig(seed=3))
        log_c, rel_mcse = bridge_log_c(target, out, rng=chain_rng(3, 0, 4))
        assert 0 < rel_mcse < 0.05
        assert abs(log_c - bern_log_c(0.5, 20, 100)) < 5 * rel_mcse

    def test_prior_draws_give_zero(self, poisson, poisson_data_200):
        target = PowerPriorTarget(poisson, poisson_data_200, 0.0)
        out = sample_power_posterior(target, ChainConfig(seed=4))
        log_c, rel_mcse = bridge_log_c(target, out)
        assert abs(log_c) < 5 * rel_mcse

    def test_reproducible_with_the_same_rng(self, bernoulli, bernoulli_data):
        target = PowerPriorTarget(bernoulli, bernoulli_data, 0.8)
        out = sample_power_posterior(target, ChainConfig(n_iter=600, n_warmup=100))
        a = bridge_log_c(target, out, rng=np.random.default_rng(1))
        b = bridge_log_c(target, out, rng=np.random.default_rng(1))
        assert a == b

    def test_rejects_current_data(self, bernoulli, bernoulli_data):
        target = PowerPriorTarget(bernoulli, bernoulli_data, 0.5, Dataset.from_counts(3, 10))
        out = sample_power_posterior(PowerPriorTarget(bernoulli, bernoulli_data, 0.5))
        with pytest.raises(SupportError):
            bridge_log_c(target, out)

    def test_non_convergence(self, bernoulli, bernoulli_data):
        target = PowerPriorTarget(bernoulli, bernoulli_data, 0.5)
        out = sample_power_posterior(target, ChainConfig(n_iter=600, n_warmup=100))
        with pytest.raises(NumericalError):
            bridge_log_c(target, out, BridgeConfig(tol=1e-300, max_iter=1))


@pytest.mark.slow
class TestBridgeAcrossSeeds:
    def test_bernoulli(self, bernoulli, bernoulli_data):
        target = PowerPriorTarget(bernoulli, bernoulli_data, 0.5)
        exact = bern_log_c(0.5, 20, 100)
        hits = 0
        for seed in range(20):
            out = sample_power_posterior(target, ChainConfig(seed=seed))
            est, rel_mcse = bridge_log_c(target, out, rng=chain_rng(seed, 1, 4))
            hits += abs(est - exact) < 3 * rel_mcse
        assert hits >= 18

    def test_regression_scenario_a(self, nig, linreg_data_a):
        target = PowerPriorTarget(nig, linreg_data_a, 1.0)
        exact = nig_log_c_data(1.0, linreg_data_a, 0.0, 1.5, 0.5, 2.0)
        hits = 0
        for seed in range(20):
            out = sample_power_posterior(target, ChainConfig(seed=seed))
            est, rel_mcse = bridge_log_c(target, out, rng=chain_rng(seed, 1, 4))
            hits += abs(est - exact) < 3 * rel_mcse
            assert abs(est - exact) / abs(exact) < 5e-3
        assert hits >= 18
