"""
    Sampling the power posterior at a fixed a0 and the free derivative estimates.

    Conjugate families draw i.i.d. from their exact conditional; everything else runs
    adaptive random-walk Metropolis on the unconstrained space. Covariance and step-size
    adaptation happen during warmup only, kept draws come from a fixed kernel.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import arviz as az
import numpy as np

from basics.base_model import PowerPriorTarget
from basics.errors import ConfigError, NumericalError, SupportError
from src.conjugate import exact_conditional_sample
from src.quadrature import laplace_fit
from utils.multiprocess_utils import chunked_multiprocess_run

logger = logging.getLogger(__name__)

ADAPT_START = 100
ADAPT_EVERY = 50


@dataclass(frozen=True)
class ChainConfig:
    n_chains: int = 4
    n_iter: int = 2000
    n_warmup: int = 1000
    seed: int = 1234
    target_acceptance: float = 0.234
    rhat_max: float = 1.01
    mcse_frac: float = 0.05
    retry_factor: int = 4
    max_retries: int = 1

    def __post_init__(self):
        if self.n_chains < 2:
            raise ConfigError(f'n_chains must be at least 2 for split diagnostics, got {self.n_chains}.')
        if not 0 <= self.n_warmup < self.n_iter:
            raise ConfigError(f'Need 0 <= n_warmup < n_iter, got n_warmup={self.n_warmup}, n_iter={self.n_iter}.')
        if not 0 < self.target_acceptance < 1:
            raise ConfigError('target_acceptance must lie in (0, 1).')
        if self.seed < 0:
            raise ConfigError('seed must be non-negative.')

    @property
    def n_kept(self):
        return self.n_iter - self.n_warmup

    def scaled(self, factor):
        return replace(self, n_iter=self.n_iter * factor, n_warmup=self.n_warmup * factor)

    @classmethod
    def from_hparams(cls, hparams):
        section = dict(hparams.get('chain') or {})
        if 'seed' not in section and hparams.get('seed') is not None:
            section['seed'] = int(hparams['seed'])
        return cls(**section)


@dataclass(frozen=True, eq=False)
class Diagnostics:
    param_names: tuple
    rhat: np.ndarray
    ess: np.ndarray
    mcse: np.ndarray
    sd: np.ndarray
    constant: np.ndarray

    def failures(self, rhat_max=1.01, mcse_frac=0.05):
        msgs = []
        for i, name in enumerate(self.param_names):
            if self.constant[i]:
                msgs.append(f'{name}: constant chain')
            elif not self.rhat[i] < rhat_max:
                msgs.append(f'{name}: rhat={self.rhat[i]:.4f}')
            elif not self.mcse[i] < mcse_frac * self.sd[i]:
                msgs.append(f'{name}: mcse/sd={self.mcse[i] / self.sd[i]:.4f}')
        return msgs

    def passed(self, rhat_max=1.01, mcse_frac=0.05):
        return not self.failures(rhat_max, mcse_frac)

    def to_dict(self):
        return {name: {'rhat': float(self.rhat[i]), 'ess': float(self.ess[i]),
                       'mcse': float(self.mcse[i]), 'sd': float(self.sd[i])}
                for i, name in enumerate(self.param_names)}


@dataclass(frozen=True, eq=False)
class ChainOutput:
    """Kept draws, shape [chains, kept, q], and log L(D0|theta) at each of them."""
    draws: np.ndarray
    log_likelihood_trace: np.ndarray
    acceptance_rate: float
    param_names: tuple = ()
    a0: float = float('nan')
    diagnostics: Optional[Diagnostics] = field(default=None)
    gate_passed: Optional[bool] = None

    @property
    def n_chains(self):
        return self.draws.shape[0]

    @property
    def n_draws(self):
        return self.draws.shape[0] * self.draws.shape[1]

    @property
    def q(self):
        return self.draws.shape[-1]

    def flat(self):
        return self.draws.reshape(-1, self.q)


def a0_stream(a0):
    """Stable RNG stream id for an a0 value (its IEEE-754 bit pattern)."""
    return int(np.array(float(a0), dtype=np.float64).view(np.uint64))


def chain_rng(seed, stream, chain):
    streams = stream if isinstance(stream, tuple) else (stream,)
    return np.random.default_rng([int(seed), *(int(s) for s in streams), int(chain)])


def _exact_chain(target: PowerPriorTarget, cfg: ChainConfig, stream, chain):
    rng = chain_rng(cfg.seed, stream, chain)
    draws = exact_conditional_sample(target.model, target.historical, target.a0, target.current, rng, cfg.n_kept)
    return np.asarray(draws.values, dtype=float).reshape(cfg.n_kept, -1), 1.0


class AdaptiveRWM:
    """
        Random-walk Metropolis on R^q with proposal exp(log_scale) * L z. While ``adapt`` is
        passed to ``step``, log_scale follows a Robbins-Monro recursion towards the target
        acceptance and L tracks the Cholesky factor of the running covariance of the states.
    """

    def __init__(self, chol, target_acceptance=0.234):
        self.q = chol.shape[0]
        self.L = np.array(chol, dtype=float)
        self.log_scale = np.log(2.38 / np.sqrt(self.q))
        self.target_acceptance = target_acceptance
        self._mean = np.zeros(self.q)
        self._m2 = np.zeros((self.q, self.q))
        self._n = 0

    def step(self, u, lp, log_density, rng, adapt=False):
        proposal = u + np.exp(self.log_scale) * (self.L @ rng.standard_normal(self.q))
        lp_new = log_density(proposal)
        log_alpha = lp_new - lp if np.isfinite(lp_new) else -np.inf
        accept = bool(np.log(rng.uniform()) < log_alpha)
        if accept:
            u, lp = proposal, lp_new
        if adapt:
            self._adapt(u, min(1.0, np.exp(log_alpha)))
        return u, lp, accept

    def _adapt(self, u, accept_prob):
        self._n += 1
        self.log_scale += self._n ** -0.6 * (accept_prob - self.target_acceptance)
        # Welford running covariance
        delta = u - self._mean
        self._mean += delta / self._n
        self._m2 += np.outer(delta, u - self._mean)
        if self._n > ADAPT_START and self._n % ADAPT_EVERY == 0:
            cov = self._m2 / (self._n - 1)
            try:
                self.L = np.linalg.cholesky(cov + 1e-10 * np.eye(self.q))
            except np.linalg.LinAlgError:
                pass


def initial_state(log_density, mode, chol, rng):
    """Laplace mode jittered by one draw of its normal approximation, or the mode itself."""
    u = mode + chol @ rng.standard_normal(mode.size)
    lp = log_density(u)
    if not np.isfinite(lp):
        u, lp = mode.copy(), log_density(mode)
    if not np.isfinite(lp):
        raise NumericalError('Log density is not finite at the initial point.')
    return u, lp


def _rwm_chain(target: PowerPriorTarget, cfg: ChainConfig, stream, chain, mode, chol):
    rng = chain_rng(cfg.seed, stream, chain)

    def f(u):
        return float(target.log_density_unconstrained(u))

    u, lp = initial_state(f, mode, chol, rng)
    kernel = AdaptiveRWM(chol, cfg.target_acceptance)
    kept = np.empty((cfg.n_kept, mode.size))
    n_accepted = 0
    for t in range(cfg.n_iter):
        u, lp, accept = kernel.step(u, lp, f, rng, adapt=t < cfg.n_warmup)
        if t >= cfg.n_warmup:
            kept[t - cfg.n_warmup] = u
            n_accepted += accept

    if n_accepted == 0:
        raise NumericalError(f'Chain {chain} accepted no proposal after warmup (a0={target.a0}).')
    theta, _ = target.model.from_unconstrained(kept)
    return theta, n_accepted / cfg.n_kept


def _chain_job(target, cfg, stream, chain, mode, chol):
    if mode is None:
        return _exact_chain(target, cfg, stream, chain)
    return _rwm_chain(target, cfg, stream, chain, mode, chol)


def sample_power_posterior(target: PowerPriorTarget, cfg: ChainConfig = None, stream=None, num_workers=1):
    """
        Draw n_chains x (n_iter - n_warmup) samples from the power posterior ``target``.
        ``stream`` selects the RNG stream next to ``cfg.seed``; it defaults to the bit
        pattern of a0 so that different a0 values never share random numbers.
    """
    cfg = cfg or ChainConfig()
    stream = a0_stream(target.a0) if stream is None else stream
    model = target.model
    if model.is_conjugate:
        mode = chol = None
    else:
        mode, chol, _ = laplace_fit(target)
    jobs = [(target, cfg, stream, chain, mode, chol) for chain in range(cfg.n_chains)]
    results = list(chunked_multiprocess_run(_chain_job, jobs, num_workers=num_workers))
    draws = np.stack([r[0] for r in results])
    acceptance = float(np.mean([r[1] for r in results]))
    with np.errstate(divide='ignore', invalid='ignore'):
        ll0 = model.log_likelihood(target.historical, draws)
    if not np.all(np.isfinite(ll0)):
        raise NumericalError(f'log L(D0|theta) is not finite at {int(np.sum(~np.isfinite(ll0)))} draws.')
    return ChainOutput(draws=draws, log_likelihood_trace=np.asarray(ll0, dtype=float), acceptance_rate=acceptance,
                       param_names=tuple(model.param_names(target.historical)), a0=target.a0)


def compute_diagnostics(out, param_names=None):
    """
        Split R-hat and mean ESS per parameter from a ChainOutput or a [chains, draws, q] array.
        Zero-variance parameters are flagged as constant and fail the gate.
    """
    draws = out.draws if isinstance(out, ChainOutput) else np.asarray(out, dtype=float)
    if draws.ndim == 2:
        draws = draws[..., None]
    if draws.shape[0] < 2:
        raise SupportError(f'Diagnostics need at least 2 chains, got {draws.shape[0]}.')
    names = param_names or (out.param_names if isinstance(out, ChainOutput) and out.param_names else None) \
        or tuple(f'x{i}' for i in range(draws.shape[-1]))
    q = draws.shape[-1]
    rhat, ess, mcse, sd = (np.full(q, np.nan) for _ in range(4))
    constant = np.zeros(q, dtype=bool)
    for j in range(q):
        x = draws[..., j]
        sd[j] = np.std(x, ddof=1)
        if not sd[j] > 0 or np.ptp(x) <= 1e-12 * max(1.0, np.abs(x).max()):
            constant[j] = True
            continue
        rhat[j] = float(az.rhat(x, method='split'))
        ess[j] = float(az.ess(x, method='mean'))
        mcse[j] = sd[j] / np.sqrt(ess[j])
    return Diagnostics(param_names=tuple(names), rhat=rhat, ess=ess, mcse=mcse, sd=sd, constant=constant)


def sample_power_posterior_gated(target: PowerPriorTarget, cfg: ChainConfig = None, stream=None, num_workers=1):
    """
        sample_power_posterior followed by the convergence gate (R-hat < rhat_max and
        MCSE < mcse_frac * sd for every parameter). A failing run is repeated with
        retry_factor times the iterations; if that still fails the output is returned
        with ``gate_passed=False``.
    """
    cfg = cfg or ChainConfig()
    run_cfg = cfg
    for attempt in range(cfg.max_retries + 1):
        out = sample_power_posterior(target, run_cfg, stream=stream, num_workers=num_workers)
        diag = compute_diagnostics(out)
        failures = diag.failures(cfg.rhat_max, cfg.mcse_frac)
        if not failures:
            return replace(out, diagnostics=diag, gate_passed=True)
        if attempt < cfg.max_retries:
            logger.info(f'| a0={target.a0:.6g}: diagnostics gate failed ({"; ".join(failures)}), '
                        f'retrying with {cfg.retry_factor}x iterations')
            run_cfg = run_cfg.scaled(cfg.retry_factor)
    logger.warning(f'| a0={target.a0:.6g}: diagnostics gate failed after retry ({"; ".join(failures)})')
    return replace(out, diagnostics=diag, gate_passed=False)


def _trace(out):
    return np.asarray(out.log_likelihood_trace if isinstance(out, ChainOutput) else out, dtype=float)


def _mean_mcse(x):
    x = np.atleast_2d(x)
    sd = np.std(x, ddof=1) if x.size > 1 else 0.0
    if not sd > 0:
        return 0.0
    return float(sd / np.sqrt(az.ess(x, method='mean')))


def estimate_l_prime(out):
    """l'(a0) = E[log L(D0|theta)] under the power prior; returns (estimate, mcse)."""
    x = _trace(out)
    return float(np.mean(x)), _mean_mcse(x)


def estimate_l_second(out):
    """l''(a0) = Var[log L(D0|theta)] under the power prior; returns (estimate, mcse)."""
    x = _trace(out)
    if x.size < 2:
        return 0.0, 0.0
    dev2 = (x - np.mean(x)) ** 2
    return float(np.var(x, ddof=1)), _mean_mcse(dev2)
