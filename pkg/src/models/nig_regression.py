import numpy as np
from scipy import linalg
from scipy.special import gammaln

from basics.base_model import BaseModel, register_model
from src.conjugate import (LOG_2PI, nig_log_c_data, nig_log_c_prime_data, nig_log_evidence,
                           nig_prior_arrays, nig_update, power_groups)


@register_model
class NIGRegression(BaseModel):
    """
        Linear regression y = X beta + eps with a normal inverse-gamma prior:
        beta | sigma2 ~ N(mu0, sigma2 Lambda0), sigma2 ~ InvGamma(alpha0, gamma0).
        ``mu0`` and ``Lambda0`` may be scalars (broadcast to the number of covariates).
        theta = (beta_1, ..., beta_P, sigma2).
    """
    data_kind = 'real'
    requires_covariates = True
    is_conjugate = True

    def __init__(self, mu0=0.0, Lambda0=1.0, alpha0=1.0, gamma0=1.0):
        assert alpha0 > 0 and gamma0 > 0, 'alpha0 and gamma0 must be positive.'
        self.mu0 = mu0
        self.Lambda0 = Lambda0
        self.alpha0 = float(alpha0)
        self.gamma0 = float(gamma0)
        self._prior_cache = {}

    def hyperparameters(self):
        return {'mu0': np.asarray(self.mu0).tolist(), 'Lambda0': np.asarray(self.Lambda0).tolist(),
                'alpha0': self.alpha0, 'gamma0': self.gamma0}

    def _prior_args(self):
        return self.mu0, self.Lambda0, self.alpha0, self.gamma0

    def prior_arrays(self, P):
        if P not in self._prior_cache:
            mu0, Lambda0, _ = nig_prior_arrays(self.mu0, self.Lambda0, P)
            chol = linalg.cholesky(Lambda0, lower=True)
            self._prior_cache[P] = (mu0, chol, 2.0 * float(np.sum(np.log(np.diag(chol)))))
        return self._prior_cache[P]

    def dim(self, data):
        return data.P + 1

    def param_names(self, data):
        return [f'beta{i + 1}' for i in range(data.P)] + ['sigma2']

    def constraints(self, q):
        return ('real',) * (q - 1) + ('positive',)

    def log_likelihood(self, data, theta):
        theta = np.asarray(theta)
        beta, sigma2 = theta[..., :-1], theta[..., -1]
        rss = (data.yty - 2.0 * beta @ data.Xty
               + np.einsum('...i,ij,...j->...', beta, data.XtX, beta))
        return -0.5 * data.n * (LOG_2PI + np.log(sigma2)) - 0.5 * rss / sigma2

    def log_prior(self, theta):
        theta = np.asarray(theta)
        beta, sigma2 = theta[..., :-1], theta[..., -1]
        P = beta.shape[-1]
        mu0, chol, logdet = self.prior_arrays(P)
        diff = (beta - mu0).reshape(-1, P)
        white = linalg.solve_triangular(chol, diff.T, lower=True)
        quad = np.sum(white ** 2, axis=0).reshape(beta.shape[:-1])
        log_normal = -0.5 * P * (LOG_2PI + np.log(sigma2)) - 0.5 * logdet - 0.5 * quad / sigma2
        log_inv_gamma = (self.alpha0 * np.log(self.gamma0) - gammaln(self.alpha0)
                         - (self.alpha0 + 1) * np.log(sigma2) - self.gamma0 / sigma2)
        return log_normal + log_inv_gamma

    def initial_unconstrained(self, data):
        beta = np.linalg.solve(data.XtX, data.Xty)
        rss = max(float(np.sum((data.y - data.X @ beta) ** 2)), 1e-12)
        return np.append(beta, np.log(rss / data.n))

    def log_c(self, data, a0):
        return nig_log_c_data(a0, data, *self._prior_args())

    def log_c_prime(self, data, a0):
        return nig_log_c_prime_data(a0, data, *self._prior_args())

    def sample_conditional(self, historical, a0, current, rng, n):
        p = nig_update(power_groups(historical, a0, current), *self._prior_args())
        sigma2 = p.gamma / rng.gamma(p.alpha, 1.0, size=n)
        z = rng.standard_normal((n, p.mu.size))
        # covariance sigma2 * Lambda_n^{-1} with Lambda_n = L L^T
        beta = p.mu + np.sqrt(sigma2)[:, None] * linalg.solve_triangular(p.chol.T, z.T, lower=False).T
        return np.column_stack([beta, sigma2])

    def log_marginal_a0(self, historical, current, a0, prior_A):
        a0 = np.asarray(a0, dtype=float)

        def one(a):
            if current is None:
                return 0.0
            return (nig_log_evidence(power_groups(historical, a, current), *self._prior_args())
                    - nig_log_evidence([(historical, a)], *self._prior_args()))

        values = np.array([one(float(a)) for a in a0.ravel()]).reshape(a0.shape)
        out = prior_A.log_pdf(a0) + values
        return float(out) if out.ndim == 0 else out
