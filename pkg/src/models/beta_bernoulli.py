import numpy as np
from scipy.special import betaln, xlog1py, xlogy

from basics.base_model import BaseModel, register_model
from src.conjugate import (bern_log_c, bern_log_c_prime, bern_marginal_post_a0_unnorm,
                           bern_posterior_params)


@register_model
class BetaBernoulli(BaseModel):
    data_kind = 'binary'
    is_conjugate = True
    is_monotone = True

    def __init__(self, c=1.0, d=1.0):
        assert c > 0 and d > 0, 'Beta prior parameters c and d must be positive.'
        self.c = float(c)
        self.d = float(d)

    def hyperparameters(self):
        return {'c': self.c, 'd': self.d}

    def dim(self, data=None):
        return 1

    def param_names(self, data=None):
        return ['theta']

    def constraints(self, q):
        return ('unit',)

    def log_likelihood(self, data, theta):
        p = np.asarray(theta)[..., 0]
        s = data.sum_y
        return xlogy(s, p) + xlog1py(data.n - s, -p)

    def log_prior(self, theta):
        p = np.asarray(theta)[..., 0]
        return xlogy(self.c - 1, p) + xlog1py(self.d - 1, -p) - betaln(self.c, self.d)

    def initial_unconstrained(self, data):
        p = (data.sum_y + 0.5) / (data.n + 1.0)
        return np.array([np.log(p) - np.log1p(-p)])

    def log_c(self, data, a0):
        return bern_log_c(a0, data.sum_y, data.n, self.c, self.d)

    def log_c_prime(self, data, a0):
        return bern_log_c_prime(a0, data.sum_y, data.n, self.c, self.d)

    def sample_conditional(self, historical, a0, current, rng, n):
        z, w = bern_posterior_params(historical, a0, current, self.c, self.d)
        return rng.beta(z, w, size=n)[:, None]

    def log_marginal_a0(self, historical, current, a0, prior_A):
        return bern_marginal_post_a0_unnorm(a0, historical, current, self.c, self.d, prior_A)
