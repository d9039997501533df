"""
    Closed-form normalising constants l(a0) = log c(a0) of the power prior for the
    conjugate families, their derivatives l'(a0), exact power-posterior updates and
    the closed-form marginal posteriors of a0.

    Every constant lives on the log scale. Weighted "groups" ``[(dataset, weight), ...]``
    describe a likelihood raised to per-dataset powers, so the historical data enters
    with weight a0 and the current data with weight 1.
"""
import functools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg
from scipy.special import betaln, digamma, gammaln

from basics.base_model import Dataset, ThetaPoint
from basics.errors import NumericalError, SupportError, UnsupportedError

LOG_2PI = float(np.log(2 * np.pi))


def _as_a0(a0):
    a0 = np.asarray(a0, dtype=float)
    if not np.all(np.isfinite(a0)) or np.any(a0 < 0):
        raise SupportError(f'a0 must be finite and non-negative, got {a0}.')
    return a0


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def power_groups(historical: Dataset, a0, current: Optional[Dataset] = None):
    groups = [(historical, a0)]
    if current is not None:
        groups.append((current, 1.0))
    return groups


###########
# Beta-Bernoulli
###########
def _check_bernoulli(y0, N0, c, d):
    if not 0 <= y0 <= N0:
        raise SupportError(f'Need 0 <= y0 <= N0, got y0={y0}, N0={N0}.')
    if c <= 0 or d <= 0:
        raise NumericalError(f'Beta parameters must be positive, got c={c}, d={d}.')


def bern_log_c(a0, y0, N0, c=1.0, d=1.0):
    a0 = _as_a0(a0)
    _check_bernoulli(y0, N0, c, d)
    return _out(betaln(a0 * y0 + c, a0 * (N0 - y0) + d) - betaln(c, d))


def bern_log_c_prime(a0, y0, N0, c=1.0, d=1.0):
    a0 = _as_a0(a0)
    _check_bernoulli(y0, N0, c, d)
    z0 = a0 * y0 + c
    w0 = a0 * (N0 - y0) + d
    return _out(y0 * digamma(z0) + (N0 - y0) * digamma(w0) - N0 * digamma(z0 + w0))


def bern_posterior_params(historical: Dataset, a0, current: Optional[Dataset] = None, c=1.0, d=1.0):
    z = c + a0 * historical.sum_y
    w = d + a0 * (historical.n - historical.sum_y)
    if current is not None:
        z = z + current.sum_y
        w = w + current.n - current.sum_y
    return z, w


def bern_marginal_post_a0_unnorm(a0, D0: Dataset, D: Optional[Dataset], c, d, prior_A):
    """log pi(a0 | D0, D) up to a constant: log pi_A + ln B(posterior) - ln B(power prior)."""
    a0 = _as_a0(a0)
    _check_bernoulli(D0.sum_y, D0.n, c, d)
    z0, w0 = bern_posterior_params(D0, a0, None, c, d)
    z, w = bern_posterior_params(D0, a0, D, c, d)
    if np.any(z <= 0) or np.any(w <= 0):
        raise NumericalError(f'Non-positive Beta arguments in the marginal of a0: ({z}, {w}).')
    return _out(prior_A.log_pdf(a0) + betaln(z, w) - betaln(z0, w0))


###########
# Gamma-Poisson
###########
def _count_stats(counts):
    if isinstance(counts, Dataset):
        return counts.sum_y, counts.n, counts.sum_log_factorial
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise SupportError('Counts must be non-negative.')
    return float(counts.sum()), int(counts.size), float(gammaln(counts + 1).sum())


def _check_gamma(alpha0, beta0):
    if alpha0 <= 0 or beta0 <= 0:
        raise NumericalError(f'Gamma parameters must be positive, got alpha0={alpha0}, beta0={beta0}.')


def pois_log_c(a0, counts, alpha0, beta0):
    a0 = _as_a0(a0)
    _check_gamma(alpha0, beta0)
    s, N0, slf = _count_stats(counts)
    shape = a0 * s + alpha0
    return _out((gammaln(shape) - gammaln(alpha0))
                + (alpha0 * np.log(beta0) - shape * np.log(a0 * N0 + beta0))
                - a0 * slf)


def pois_log_c_prime(a0, counts, alpha0, beta0):
    a0 = _as_a0(a0)
    _check_gamma(alpha0, beta0)
    s, N0, slf = _count_stats(counts)
    rate = beta0 + N0 * a0
    return _out(-slf - N0 * (alpha0 + s * a0) / rate - s * np.log(rate) + s * digamma(alpha0 + s * a0))


def gamma_posterior_params(historical: Dataset, a0, current: Optional[Dataset] = None, alpha0=1.0, beta0=1.0):
    shape = alpha0 + a0 * historical.sum_y
    rate = beta0 + a0 * historical.n
    if current is not None:
        shape = shape + current.sum_y
        rate = rate + current.n
    return shape, rate


###########
# Normal-Gamma: mu | tau ~ N(mu0, 1/(kappa0 tau)), tau ~ Gamma(alpha0, rate beta0)
###########
@dataclass(frozen=True)
class NormalGammaParams:
    mu: float
    kappa: float
    alpha: float
    beta: float
    n_eff: float


def ng_update(groups, mu0, kappa0, alpha0, beta0):
    if kappa0 <= 0 or alpha0 <= 0 or beta0 <= 0:
        raise NumericalError(f'Normal-gamma parameters must be positive, got kappa0={kappa0}, '
                             f'alpha0={alpha0}, beta0={beta0}.')
    mu, kappa, alpha, beta, n_eff = mu0, kappa0, alpha0, beta0, 0.0
    for data, w in groups:
        wn = w * data.n
        kappa_new = kappa + wn
        beta = beta + 0.5 * (w * data.ss + kappa * wn * (data.mean_y - mu) ** 2 / kappa_new)
        mu = (kappa * mu + wn * data.mean_y) / kappa_new
        kappa = kappa_new
        alpha = alpha + 0.5 * wn
        n_eff = n_eff + wn
    return NormalGammaParams(mu, kappa, alpha, beta, n_eff)


def ng_log_evidence(groups, mu0, kappa0, alpha0, beta0):
    """log of the integral of prod_g L(D_g | mu, tau)^{w_g} against the normal-gamma prior."""
    p = ng_update(groups, mu0, kappa0, alpha0, beta0)
    return _out((gammaln(p.alpha) - gammaln(alpha0))
                + (alpha0 * np.log(beta0) - p.alpha * np.log(p.beta))
                + 0.5 * (np.log(kappa0) - np.log(p.kappa))
                - 0.5 * p.n_eff * LOG_2PI)


def ng_log_c(a0, data: Dataset, mu0, kappa0, alpha0, beta0):
    a0 = _as_a0(a0)
    return ng_log_evidence([(data, a0)], mu0, kappa0, alpha0, beta0)


def ng_log_c_prime_terms(a0, data: Dataset, mu0, kappa0, alpha0, beta0):
    """The four summands of l' for the factors c = g h w z (log-Gamma, rate, kappa and 2 pi parts)."""
    a0 = _as_a0(a0)
    p = ng_update([(data, a0)], mu0, kappa0, alpha0, beta0)
    N0 = data.n
    beta_prime = 0.5 * (data.ss + kappa0 ** 2 * N0 * (data.mean_y - mu0) ** 2 / p.kappa ** 2)
    return {
        'g': 0.5 * N0 * digamma(p.alpha),
        'h': -0.5 * N0 * np.log(p.beta) - p.alpha * beta_prime / p.beta,
        'w': -0.5 * N0 / p.kappa,
        'z': -0.5 * N0 * LOG_2PI * np.ones_like(p.kappa),
    }


def ng_log_c_prime(a0, data: Dataset, mu0, kappa0, alpha0, beta0):
    terms = ng_log_c_prime_terms(a0, data, mu0, kappa0, alpha0, beta0)
    return _out(terms['g'] + terms['h'] + terms['w'] + terms['z'])


###########
# Normal-inverse-Gamma regression:
#   beta | sigma2 ~ N(mu0, sigma2 Lambda0), sigma2 ~ InvGamma(alpha0, gamma0)
###########
@dataclass(frozen=True, eq=False)
class NIGParams:
    mu: np.ndarray
    precision: np.ndarray
    chol: np.ndarray
    alpha: float
    gamma: float
    n_eff: float


def _cholesky(a, what):
    try:
        return linalg.cholesky(a, lower=True)
    except linalg.LinAlgError as e:
        raise NumericalError(f'{what} is not positive definite.') from e


def nig_prior_arrays(mu0, Lambda0, P):
    mu0 = np.broadcast_to(np.asarray(mu0, dtype=float), (P,)).copy()
    Lambda0 = np.asarray(Lambda0, dtype=float)
    if Lambda0.ndim == 0:
        Lambda0 = float(Lambda0) * np.eye(P)
    elif Lambda0.ndim == 1:
        Lambda0 = np.diag(Lambda0)
    if Lambda0.shape != (P, P):
        raise SupportError(f'Lambda0 must be {P}x{P}, got {Lambda0.shape}.')
    if not np.allclose(Lambda0, Lambda0.T):
        raise SupportError('Lambda0 must be symmetric.')
    chol0 = _cholesky(Lambda0, 'Lambda0')
    precision0 = linalg.cho_solve((chol0, True), np.eye(P))
    precision0 = 0.5 * (precision0 + precision0.T)
    return mu0, Lambda0, precision0


def nig_update(groups, mu0, Lambda0, alpha0, gamma0):
    if alpha0 <= 0 or gamma0 <= 0:
        raise NumericalError(f'Inverse-gamma parameters must be positive, got alpha0={alpha0}, gamma0={gamma0}.')
    P = groups[0][0].P
    mu0, _, precision0 = nig_prior_arrays(mu0, Lambda0, P)
    precision = precision0.copy()
    b = precision0 @ mu0
    alpha, n_eff = alpha0, 0.0
    for data, w in groups:
        precision = precision + w * data.XtX
        b = b + w * data.Xty
        alpha = alpha + 0.5 * w * data.n
        n_eff = n_eff + w * data.n
    chol = _cholesky(precision, 'Posterior precision Lambda_n')
    mu = linalg.cho_solve((chol, True), b)
    # residual form keeps gamma_n == gamma0 at zero weight
    dev = mu - mu0
    rss = sum(w * float(np.sum((data.y - data.X @ mu) ** 2)) for data, w in groups)
    gamma = gamma0 + 0.5 * (rss + float(dev @ precision0 @ dev))
    return NIGParams(mu, precision, chol, alpha, gamma, n_eff)


def _logdet_from_chol(chol):
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def nig_log_evidence(groups, mu0, Lambda0, alpha0, gamma0):
    P = groups[0][0].P
    _, _, precision0 = nig_prior_arrays(mu0, Lambda0, P)
    p = nig_update(groups, mu0, Lambda0, alpha0, gamma0)
    logdet0 = _logdet_from_chol(_cholesky(precision0, 'Prior precision'))
    return (0.5 * (logdet0 - _logdet_from_chol(p.chol))
            + (alpha0 * np.log(gamma0) - p.alpha * np.log(p.gamma))
            + (gammaln(p.alpha) - gammaln(alpha0))
            - 0.5 * p.n_eff * LOG_2PI)


def _map_a0(fn, a0):
    a0 = _as_a0(a0)
    if a0.ndim == 0:
        return float(fn(float(a0)))
    return np.array([fn(float(a)) for a in a0.ravel()]).reshape(a0.shape)


def nig_log_c_data(a0, data: Dataset, mu0, Lambda0, alpha0, gamma0):
    return _map_a0(lambda a: nig_log_evidence([(data, a)], mu0, Lambda0, alpha0, gamma0), a0)


def nig_log_c_prime_data(a0, data: Dataset, mu0, Lambda0, alpha0, gamma0):
    def one(a):
        p = nig_update([(data, a)], mu0, Lambda0, alpha0, gamma0)
        trace = float(np.trace(linalg.cho_solve((p.chol, True), data.XtX)))
        gamma_prime = 0.5 * float(np.sum((data.y - data.X @ p.mu) ** 2))
        N0 = data.n
        return (-0.5 * trace + 0.5 * N0 * digamma(p.alpha) - 0.5 * N0 * np.log(p.gamma)
                - p.alpha * gamma_prime / p.gamma - 0.5 * N0 * LOG_2PI)

    return _map_a0(one, a0)


def nig_log_c(a0, X0, y0, mu0, Lambda0, alpha0, gamma0):
    return nig_log_c_data(a0, Dataset(y=y0, X=X0), mu0, Lambda0, alpha0, gamma0)


def nig_log_c_prime(a0, X0, y0, mu0, Lambda0, alpha0, gamma0):
    return nig_log_c_prime_data(a0, Dataset(y=y0, X=X0), mu0, Lambda0, alpha0, gamma0)


###########
# Conjugate exponential family
###########
def _bernoulli_log_H(tau, n0):
    # base measure dtheta / (theta (1 - theta))
    return -betaln(tau, n0 - tau)


def _poisson_log_H(tau, n0):
    # base measure dlambda / lambda
    return tau * np.log(n0) - gammaln(tau)


@dataclass(frozen=True)
class ExpFamConjugateSpec:
    log_H: Callable
    tau: float
    n0: float
    S: float
    h: float

    @classmethod
    def bernoulli(cls, data: Dataset, c=1.0, d=1.0):
        return cls(log_H=_bernoulli_log_H, tau=c, n0=c + d, S=data.sum_y, h=0.0)

    @classmethod
    def poisson(cls, data: Dataset, alpha0=1.0, beta0=1.0):
        return cls(log_H=_poisson_log_H, tau=alpha0, n0=beta0, S=data.sum_y, h=-data.sum_log_factorial)


def _log_H(spec, tau, n0):
    if np.any(np.asarray(n0) <= 0):
        raise NumericalError(f'Prior pseudo-count must stay positive, got {n0}.')
    with np.errstate(invalid='ignore', divide='ignore'):
        value = spec.log_H(tau, n0)
    if not np.all(np.isfinite(value)):
        raise NumericalError(f'log H undefined at tau={tau}, n0={n0}.')
    return value


def expfam_log_c_conjugate(spec: ExpFamConjugateSpec, a0, N0):
    a0 = _as_a0(a0)
    return _out(a0 * spec.h + _log_H(spec, spec.tau, spec.n0)
                - _log_H(spec, spec.tau + a0 * spec.S, spec.n0 + a0 * N0))


def expfam_marginal_post_a0(spec: ExpFamConjugateSpec, a0, N0, N, S_D, h_D, prior_A):
    a0 = _as_a0(a0)
    tau = spec.tau + a0 * spec.S
    n0 = spec.n0 + a0 * N0
    return _out(prior_A.log_pdf(a0) + h_D + _log_H(spec, tau, n0) - _log_H(spec, tau + S_D, n0 + N))


###########
# Family-independent entry points
###########
@dataclass(frozen=True)
class ConjugateConstants:
    log_c: Callable
    log_c_prime: Callable
    family: str


def conjugate_constants(model, historical: Dataset):
    if not model.is_conjugate:
        raise UnsupportedError(f'{model.family} has no closed-form normalising constant.')
    return ConjugateConstants(log_c=functools.partial(model.log_c, historical),
                              log_c_prime=functools.partial(model.log_c_prime, historical),
                              family=model.family)


def exact_conditional_sample(model, D0: Dataset, a0, D: Optional[Dataset], rng, n):
    """n i.i.d. draws from the power posterior at fixed a0 (power prior when D is None)."""
    if not model.is_conjugate:
        raise UnsupportedError(f'Exact sampling is not available for {model.family}; use the mcmc module.')
    a0 = float(_as_a0(a0))
    return ThetaPoint(model.sample_conditional(D0, a0, D, rng, n))
