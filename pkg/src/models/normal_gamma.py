import numpy as np
from scipy.special import gammaln, xlogy

from basics.base_model import BaseModel, register_model
from src.conjugate import (LOG_2PI, ng_log_c, ng_log_c_prime, ng_log_evidence, ng_update,
                           power_groups)


@register_model
class NormalGamma(BaseModel):
    """Normal data with unknown mean mu and precision tau; mu | tau ~ N(mu0, 1/(kappa0 tau)), tau ~ Gamma(alpha0, beta0)."""
    data_kind = 'real'
    is_conjugate = True

    def __init__(self, mu0=0.0, kappa0=1.0, alpha0=1.0, beta0=1.0):
        assert kappa0 > 0 and alpha0 > 0 and beta0 > 0, 'kappa0, alpha0 and beta0 must be positive.'
        self.mu0 = float(mu0)
        self.kappa0 = float(kappa0)
        self.alpha0 = float(alpha0)
        self.beta0 = float(beta0)

    def hyperparameters(self):
        return {'mu0': self.mu0, 'kappa0': self.kappa0, 'alpha0': self.alpha0, 'beta0': self.beta0}

    def _prior_args(self):
        return self.mu0, self.kappa0, self.alpha0, self.beta0

    def dim(self, data=None):
        return 2

    def param_names(self, data=None):
        return ['mu', 'tau']

    def constraints(self, q):
        return ('real', 'positive')

    def log_likelihood(self, data, theta):
        theta = np.asarray(theta)
        mu, tau = theta[..., 0], theta[..., 1]
        return (0.5 * data.n * (np.log(tau) - LOG_2PI)
                - 0.5 * tau * (data.ss + data.n * (data.mean_y - mu) ** 2))

    def log_prior(self, theta):
        theta = np.asarray(theta)
        mu, tau = theta[..., 0], theta[..., 1]
        log_normal = 0.5 * (np.log(self.kappa0 * tau) - LOG_2PI) - 0.5 * self.kappa0 * tau * (mu - self.mu0) ** 2
        log_gamma = (self.alpha0 * np.log(self.beta0) - gammaln(self.alpha0)
                     + xlogy(self.alpha0 - 1, tau) - self.beta0 * tau)
        return log_normal + log_gamma

    def initial_unconstrained(self, data):
        var = max(data.ss / data.n, 1e-12)
        return np.array([data.mean_y, -np.log(var)])

    def log_c(self, data, a0):
        return ng_log_c(a0, data, *self._prior_args())

    def log_c_prime(self, data, a0):
        return ng_log_c_prime(a0, data, *self._prior_args())

    def sample_conditional(self, historical, a0, current, rng, n):
        p = ng_update(power_groups(historical, a0, current), *self._prior_args())
        tau = rng.gamma(p.alpha, 1.0 / p.beta, size=n)
        mu = rng.normal(p.mu, 1.0 / np.sqrt(p.kappa * tau))
        return np.stack([mu, tau], axis=-1)

    def log_marginal_a0(self, historical, current, a0, prior_A):
        log_joint = (ng_log_evidence(power_groups(historical, a0, current), *self._prior_args())
                     if current is not None else self.log_c(historical, a0))
        return prior_A.log_pdf(a0) + log_joint - self.log_c(historical, a0)
