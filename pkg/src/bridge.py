"""
    Bridge-sampling estimate of l(a0) = log c(a0) from power-prior draws.

    The proposal g is a multivariate normal fitted to the unconstrained draws; the target
    density f includes the log-Jacobian of the unconstrained map. The optimal-bridge fixed
    point is iterated entirely in log space, with the posterior sample size replaced by the
    effective sample size of the log-weights.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import arviz as az
import numpy as np
from scipy import stats
from scipy.special import logsumexp

from basics.base_model import PowerPriorTarget
from basics.errors import ConfigError, NumericalError, SupportError
from src.mcmc import ChainOutput

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BridgeConfig:
    tol: float = 1e-10
    max_iter: int = 1000
    # proposal draws M; None uses as many as there are posterior draws
    proposal_draws: Optional[int] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError(f'bridge.tol must be positive, got {self.tol}.')
        if self.max_iter < 1:
            raise ConfigError(f'bridge.max_iter must be at least 1, got {self.max_iter}.')
        if self.proposal_draws is not None and self.proposal_draws < 2:
            raise ConfigError('bridge.proposal_draws must be at least 2.')

    @classmethod
    def from_hparams(cls, hparams):
        return cls(**dict(hparams.get('bridge') or {}))


@dataclass(frozen=True, eq=False)
class ProposalFit:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, '_dist', stats.multivariate_normal(self.mean, self.covariance))

    @property
    def q(self):
        return self.mean.size

    def log_density(self, u):
        return np.asarray(self._dist.logpdf(u)).reshape(np.shape(u)[:-1])

    def sample(self, rng, n):
        return np.asarray(self._dist.rvs(size=n, random_state=rng)).reshape(n, self.q)


def _unconstrained_draws(draws: ChainOutput, model):
    return model.to_unconstrained(draws.flat())


def fit_proposal(draws: ChainOutput, model) -> ProposalFit:
    u = _unconstrained_draws(draws, model)
    n, q = u.shape
    if n < q + 2:
        raise SupportError(f'Need at least q + 2 = {q + 2} draws to fit the proposal, got {n}.')
    mean = u.mean(axis=0)
    cov = np.atleast_2d(np.cov(u, rowvar=False))
    cov = cov + 1e-8 * np.trace(cov) / q * np.eye(q)
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as e:
        raise NumericalError('Proposal covariance is singular after jitter (are all draws equal?).') from e
    return ProposalFit(mean=mean, covariance=cov)


def _check_log_weights(name, lw, allow_neg_inf):
    bad = np.isnan(lw) | (lw == np.inf)
    if not allow_neg_inf:
        bad |= lw == -np.inf
    if np.any(bad):
        raise NumericalError(f'Non-finite bridge weights at {int(bad.sum())} of {lw.size} {name} draws.')


def bridge_log_c(target: PowerPriorTarget, draws: ChainOutput, cfg: BridgeConfig = None, rng=None,
                 proposal: ProposalFit = None):
    """
        Iterative bridge estimate of log c(a0) for ``target`` from ``draws`` of the power prior.
        Returns ``(log_c_hat, rel_mcse)``; rel_mcse is a delta-method proxy for the standard
        error of log_c_hat.
    """
    cfg = cfg or BridgeConfig()
    if target.current is not None:
        raise SupportError('bridge_log_c estimates the power-prior constant; the target must not carry current data.')
    rng = np.random.default_rng(0) if rng is None else rng
    proposal = proposal or fit_proposal(draws, target.model)

    u1 = _unconstrained_draws(draws, target.model)
    N1 = u1.shape[0]
    N2 = cfg.proposal_draws or N1
    u2 = proposal.sample(rng, N2)

    l1 = target.log_density_unconstrained(u1) - proposal.log_density(u1)
    l2 = target.log_density_unconstrained(u2) - proposal.log_density(u2)
    _check_log_weights('posterior', l1, allow_neg_inf=False)
    _check_log_weights('proposal', l2, allow_neg_inf=True)

    l1_chains = l1.reshape(draws.n_chains, -1)
    N1_eff = float(min(N1, az.ess(l1_chains, method='mean'))) if np.ptp(l1) > 0 else float(N1)
    lstar = float(np.median(l1))
    l1s, l2s = l1 - lstar, l2 - lstar
    log_s1 = np.log(N1_eff / (N1_eff + N2))
    log_s2 = np.log(N2 / (N1_eff + N2))

    log_r = float(logsumexp(l2s) - np.log(N2))
    if not np.isfinite(log_r):
        raise NumericalError('All proposal draws have zero target density.')
    for it in range(1, cfg.max_iter + 1):
        num = logsumexp(l2s - np.logaddexp(log_s1 + l2s, log_s2 + log_r)) - np.log(N2)
        den = logsumexp(-np.logaddexp(log_s1 + l1s, log_s2 + log_r)) - np.log(N1)
        log_r_new = float(num - den)
        rel_change = abs(np.expm1(log_r_new - log_r))
        log_r = log_r_new
        if rel_change < cfg.tol:
            break
    else:
        raise NumericalError(f'Bridge iteration did not converge in {cfg.max_iter} iterations '
                             f'(last relative change {rel_change:.3g}).')

    # bounded bridge terms: f2 <= 1/s1, r * f1 <= 1/s2
    f2 = np.exp(l2s - np.logaddexp(log_s1 + l2s, log_s2 + log_r))
    f1 = np.exp(log_r - np.logaddexp(log_s1 + l1s, log_s2 + log_r))
    var2 = np.var(f2, ddof=1) / np.mean(f2) ** 2
    var1 = np.var(f1, ddof=1) / np.mean(f1) ** 2
    ess_f1 = float(min(N1, az.ess(f1.reshape(draws.n_chains, -1), method='mean'))) if np.ptp(f1) > 0 else float(N1)
    rel_mcse = float(np.sqrt(var2 / N2 + var1 / ess_f1))

    log_c = log_r + lstar
    logger.debug(f'| bridge a0={target.a0:.6g}: log c={log_c:.10g}, rel_mcse={rel_mcse:.3g}, '
                 f'iterations={it}, N1_eff={N1_eff:.0f}')
    return float(log_c), rel_mcse
