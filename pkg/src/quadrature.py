"""
    Brute-force quadrature for normalising constants in one and two dimensions and for
    normalising univariate densities on an interval.

    Integrands are evaluated on the unconstrained space around a Laplace approximation
    (mode u*, scale L): c = exp(f*) |L| * int exp(f(u* + L z) - f*) dz, so quad only ever
    sees O(1) values whatever the magnitude of the constant.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.special import logsumexp

from basics.base_model import PowerPriorTarget
from basics.errors import ConfigError, NumericalError, SupportError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 200
    # 'unconstrained': logit/log maps with Jacobian; 'native': unit interval / half-line as is (1-D only)
    domain: str = 'unconstrained'
    K_quad: int = 10001

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ConfigError('Quadrature tolerances must be positive.')
        if self.max_subdivisions < 1:
            raise ConfigError('max_subdivisions must be at least 1.')
        if self.domain not in ('unconstrained', 'native'):
            raise ConfigError(f'Unknown quadrature domain \'{self.domain}\'.')
        if self.K_quad < 2:
            raise ConfigError('K_quad must be at least 2.')

    @classmethod
    def from_hparams(cls, hparams):
        section = dict(hparams.get('quadrature') or {})
        return cls(**section)


def _quad(func, a, b, cfg: QuadratureConfig, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter('error', integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(func, a, b, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
                                        limit=cfg.max_subdivisions, points=points)
        except integrate.IntegrationWarning as w:
            raise NumericalError(f'Quadrature did not converge on [{a}, {b}]: {w}') from w
    return value, err


def _scalar_log_density(target: PowerPriorTarget):
    def f(u):
        return float(target.log_density_unconstrained(np.atleast_1d(np.asarray(u, dtype=float))))
    return f


def _numerical_hessian(f, x, steps):
    q = x.size
    H = np.empty((q, q))
    f0 = f(x)
    for i in range(q):
        ei = np.zeros(q)
        ei[i] = steps[i]
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / steps[i] ** 2
        for j in range(i + 1, q):
            ej = np.zeros(q)
            ej[j] = steps[j]
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) \
                / (4 * steps[i] * steps[j])
    return H


def laplace_fit(target: PowerPriorTarget, u0=None):
    """Mode of the unconstrained log density and the Cholesky factor of the inverse negative Hessian."""
    f = _scalar_log_density(target)
    u0 = target.model.initial_unconstrained(target.historical) if u0 is None else np.asarray(u0, dtype=float)
    if not np.isfinite(f(u0)):
        raise NumericalError(f'Log density is not finite at the starting point {u0}.')
    res = optimize.minimize(lambda u: -f(u), u0, method='BFGS')
    if not res.success:
        res = optimize.minimize(lambda u: -f(u), res.x, method='Nelder-Mead',
                                options={'xatol': 1e-10, 'fatol': 1e-12, 'maxiter': 20000})
    mode = np.atleast_1d(res.x)
    guess = np.atleast_2d(getattr(res, 'hess_inv', np.eye(mode.size)))
    sd = np.sqrt(np.clip(np.diag(guess), 1e-16, None)) if guess.shape == (mode.size, mode.size) \
        else np.ones(mode.size)
    for _ in range(2):
        H = -_numerical_hessian(f, mode, 1e-3 * sd)
        try:
            cov = np.linalg.inv(H)
            chol = np.linalg.cholesky(0.5 * (cov + cov.T))
        except np.linalg.LinAlgError as e:
            raise NumericalError('Negative Hessian at the mode is not positive definite.') from e
        sd = np.sqrt(np.diag(cov))
    return mode, chol, f(mode)


def quad_log_c_1d(model, D0, a0, cfg: QuadratureConfig = None):
    """log int L(D0|theta)^a0 pi(theta) dtheta for a scalar parameter."""
    cfg = cfg or QuadratureConfig()
    target = PowerPriorTarget(model, D0, a0)
    if target.q != 1:
        raise SupportError(f'quad_log_c_1d needs a scalar parameter, {model.family} has {target.q}.')
    mode, chol, f_star = laplace_fit(target)
    if cfg.domain == 'native':
        return _quad_native_1d(target, mode, cfg)
    f = _scalar_log_density(target)
    s = float(chol[0, 0])

    def integrand(z):
        return np.exp(f(mode[0] + s * z) - f_star)

    left, err_l = _quad(integrand, -np.inf, 0.0, cfg)
    right, err_r = _quad(integrand, 0.0, np.inf, cfg)
    total = left + right
    logger.debug(f'| quad 1d {model.family} a0={a0}: integral={total}, err={err_l + err_r}')
    return float(f_star + np.log(s) + np.log(total))


def _quad_native_1d(target, mode, cfg):
    theta_star, _ = target.model.from_unconstrained(mode)
    theta_star = float(theta_star[0])
    kind = target.model.constraints(1)[0]

    def log_f(t):
        with np.errstate(divide='ignore', invalid='ignore'):
            return float(target.log_density(np.array([t])))

    f_star = log_f(theta_star)

    def integrand(t):
        v = log_f(t)
        return np.exp(v - f_star) if np.isfinite(v) else 0.0

    if kind == 'unit':
        total, _ = _quad(integrand, 0.0, 1.0, cfg, points=[theta_star])
    elif kind == 'positive':
        a, _ = _quad(integrand, 0.0, theta_star, cfg)
        b, _ = _quad(integrand, theta_star, np.inf, cfg)
        total = a + b
    else:
        a, _ = _quad(integrand, -np.inf, theta_star, cfg)
        b, _ = _quad(integrand, theta_star, np.inf, cfg)
        total = a + b
    return float(f_star + np.log(total))


def quad_log_c_2d(model, D0, a0, cfg: QuadratureConfig = None):
    """Nested adaptive quadrature for two-parameter families (normal-gamma, single-covariate NIG)."""
    cfg = cfg or QuadratureConfig()
    target = PowerPriorTarget(model, D0, a0)
    if target.q != 2:
        raise SupportError(f'quad_log_c_2d needs two parameters, {model.family} has {target.q}.')
    mode, chol, f_star = laplace_fit(target)
    f = _scalar_log_density(target)

    def inner(z1):
        def integrand(z2):
            return np.exp(f(mode + chol @ np.array([z1, z2])) - f_star)

        left, _ = _quad(integrand, -np.inf, 0.0, cfg)
        right, _ = _quad(integrand, 0.0, np.inf, cfg)
        return left + right

    left, _ = _quad(inner, -np.inf, 0.0, cfg)
    right, _ = _quad(inner, 0.0, np.inf, cfg)
    total = left + right
    log_det = float(np.sum(np.log(np.diag(chol))))
    return float(f_star + log_det + np.log(total))


@dataclass(frozen=True, eq=False)
class DensityTable:
    a0: np.ndarray
    log_density: np.ndarray
    cdf: np.ndarray

    @property
    def density(self):
        return np.exp(self.log_density)

    def mean(self):
        return float(integrate.trapezoid(self.a0 * self.density, self.a0))

    def quantile(self, p):
        return np.interp(p, self.cdf, self.a0)

    def interval(self, level=0.95):
        tail = 0.5 * (1.0 - level)
        return float(self.quantile(tail)), float(self.quantile(1.0 - tail))

    def cdf_at(self, x):
        return np.interp(x, self.a0, self.cdf)

    def ks_distance(self, samples):
        x = np.sort(np.asarray(samples, dtype=float).ravel())
        n = x.size
        F = self.cdf_at(x)
        upper = np.arange(1, n + 1) / n - F
        lower = F - np.arange(n) / n
        return float(max(upper.max(), lower.max()))


def normalise_density_on_interval(log_density: Callable, m=0.0, M=1.0, K_quad=10001):
    """
        Trapezoid normaliser of exp(log_density) on a K_quad-point grid over [m, M].
        Non-finite endpoint values get zero mass (densities may diverge at the boundary).
        Returns (log normaliser, DensityTable).
    """
    if not M > m:
        raise SupportError(f'Need M > m, got m={m}, M={M}.')
    if K_quad < 2:
        raise SupportError('K_quad must be at least 2.')
    grid = np.linspace(m, M, int(K_quad))
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        lp = np.asarray(log_density(grid), dtype=float)
        if lp.shape != grid.shape:
            lp = np.array([float(log_density(a)) for a in grid])
    lp = lp.copy()
    interior = lp[1:-1]
    bad = np.isnan(interior) | (interior == np.inf)
    if np.any(bad):
        raise NumericalError(f'Density is not finite at interior point a0={grid[1:-1][bad][0]}.')
    for end in (0, -1):
        if not np.isfinite(lp[end]):
            lp[end] = -np.inf
    h = (M - m) / (K_quad - 1)
    seg = np.log(h / 2) + np.logaddexp(lp[:-1], lp[1:])
    log_norm = float(logsumexp(seg))
    if not np.isfinite(log_norm):
        raise NumericalError('Density integrates to zero or infinity on the interval.')
    cdf = np.concatenate([[0.0], np.exp(np.logaddexp.accumulate(seg) - log_norm)])
    cdf = np.minimum(cdf, 1.0)
    cdf[-1] = 1.0
    return log_norm, DensityTable(a0=grid, log_density=lp - log_norm, cdf=cdf)
