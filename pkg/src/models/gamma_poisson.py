import numpy as np
from scipy.special import gammaln, xlogy

from basics.base_model import BaseModel, register_model
from src.conjugate import (ExpFamConjugateSpec, expfam_marginal_post_a0, gamma_posterior_params,
                           pois_log_c, pois_log_c_prime)


@register_model
class GammaPoisson(BaseModel):
    data_kind = 'count'
    is_conjugate = True
    is_monotone = True

    def __init__(self, alpha0=1.0, beta0=1.0):
        assert alpha0 > 0 and beta0 > 0, 'Gamma prior shape and rate must be positive.'
        self.alpha0 = float(alpha0)
        self.beta0 = float(beta0)

    def hyperparameters(self):
        return {'alpha0': self.alpha0, 'beta0': self.beta0}

    def dim(self, data=None):
        return 1

    def param_names(self, data=None):
        return ['lambda']

    def constraints(self, q):
        return ('positive',)

    def log_likelihood(self, data, theta):
        lam = np.asarray(theta)[..., 0]
        return xlogy(data.sum_y, lam) - data.n * lam - data.sum_log_factorial

    def log_prior(self, theta):
        lam = np.asarray(theta)[..., 0]
        return (self.alpha0 * np.log(self.beta0) - gammaln(self.alpha0)
                + xlogy(self.alpha0 - 1, lam) - self.beta0 * lam)

    def initial_unconstrained(self, data):
        return np.array([np.log((data.sum_y + 0.5) / data.n)])

    def log_c(self, data, a0):
        return pois_log_c(a0, data, self.alpha0, self.beta0)

    def log_c_prime(self, data, a0):
        return pois_log_c_prime(a0, data, self.alpha0, self.beta0)

    def sample_conditional(self, historical, a0, current, rng, n):
        shape, rate = gamma_posterior_params(historical, a0, current, self.alpha0, self.beta0)
        return rng.gamma(shape, 1.0 / rate, size=n)[:, None]

    def log_marginal_a0(self, historical, current, a0, prior_A):
        spec = ExpFamConjugateSpec.poisson(historical, self.alpha0, self.beta0)
        if current is None:
            N, S_D, h_D = 0, 0.0, 0.0
        else:
            N, S_D, h_D = current.n, current.sum_y, -current.sum_log_factorial
        return expfam_marginal_post_a0(spec, a0, historical.n, N, S_D, h_D, prior_A)
