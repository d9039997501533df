"""
    Joint posterior of (theta, a0) under the power prior, normalised exactly, through a
    dictionary of l(a0), or not at all; exact a0 marginals for conjugate families; fixed-a0
    sensitivity sweeps.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import stats
from scipy.special import expit, logit

from basics.base_model import Dataset, PowerPriorTarget
from basics.errors import ConfigError, DictionaryRangeError, SupportError, UnsupportedError
from src.curvefit import Dictionary, lookup_l
from src.mcmc import (AdaptiveRWM, ChainConfig, ChainOutput, Diagnostics, a0_stream, chain_rng,
                      compute_diagnostics, initial_state, sample_power_posterior_gated)
from src.quadrature import DensityTable, laplace_fit, normalise_density_on_interval
from utils.multiprocess_utils import chunked_multiprocess_run

logger = logging.getLogger(__name__)

NORMALISATIONS = ('none', 'exact', 'dictionary')
JOINT_STREAM = (0, 2)
A0_TARGET_ACCEPTANCE = 0.44


@dataclass(frozen=True)
class A0Prior:
    """Beta(eta, nu) prior on a0 / M."""
    eta: float = 1.0
    nu: float = 1.0
    M: float = 1.0

    def __post_init__(self):
        if not (self.eta > 0 and self.nu > 0):
            raise ConfigError(f'a0 prior parameters must be positive, got eta={self.eta}, nu={self.nu}.')
        if not self.M > 0:
            raise ConfigError(f'a0 prior support bound M must be positive, got {self.M}.')

    @classmethod
    def from_hparams(cls, hparams):
        return cls(**dict(hparams.get('a0_prior') or {}))

    def log_pdf(self, a0):
        with np.errstate(divide='ignore'):
            return stats.beta.logpdf(np.asarray(a0, dtype=float) / self.M, self.eta, self.nu) - np.log(self.M)

    def ppf(self, p):
        return self.M * stats.beta.ppf(p, self.eta, self.nu)

    def cdf(self, a0):
        return stats.beta.cdf(np.asarray(a0, dtype=float) / self.M, self.eta, self.nu)

    def mean(self):
        return self.M * self.eta / (self.eta + self.nu)

    def rvs(self, rng, size=None):
        return self.M * rng.beta(self.eta, self.nu, size=size)


def exact_marginal_a0(model, D0: Dataset, D: Optional[Dataset], a0_prior: A0Prior, K_quad=10001) -> DensityTable:
    """Closed-form unnormalised marginal of a0 normalised on [0, M] by the trapezoid rule."""
    if not model.is_conjugate:
        raise UnsupportedError(f'{model.family} has no closed-form marginal of a0; use sample_joint '
                               f'with a dictionary.')

    def log_density(a0):
        return model.log_marginal_a0(D0, D, a0, a0_prior)

    _, table = normalise_density_on_interval(log_density, 0.0, a0_prior.M, K_quad)
    return table


@dataclass(frozen=True, eq=False)
class JointDraws:
    """theta [chains, kept, q] and a0 [chains, kept] draws from the joint posterior."""
    theta: np.ndarray
    a0: np.ndarray
    param_names: tuple
    normalisation: str
    diagnostics: Optional[Diagnostics] = None
    gate_passed: Optional[bool] = None
    acceptance_theta: float = 1.0
    acceptance_a0: float = float('nan')
    dictionary_id: str = ''

    @property
    def names(self):
        return tuple(self.param_names) + ('a0',)

    def stacked(self):
        return np.concatenate([self.theta, self.a0[..., None]], axis=-1)

    def columns(self):
        """Flat draws per name, chain-major."""
        flat = self.stacked().reshape(-1, len(self.names))
        return {name: flat[:, i] for i, name in enumerate(self.names)}

    def to_rows(self):
        n_chains, n_kept = self.a0.shape
        stacked = self.stacked()
        for c in range(n_chains):
            for i in range(n_kept):
                yield [*(float(v) for v in stacked[c, i]), c, i]

    @property
    def csv_columns(self):
        return self.names + ('chain', 'iter')


def _a0_log_conditional(a0, ll0, a0_prior, log_c):
    return a0_prior.log_pdf(a0) + a0 * ll0 - log_c(a0)


def _joint_chain(model, D0, D, a0_prior, normalisation, dictionary, cfg: ChainConfig, chain, theta_init):
    rng = chain_rng(cfg.seed, JOINT_STREAM, chain)
    M = a0_prior.M
    if normalisation == 'exact':
        def log_c(a):
            return float(model.log_c(D0, a))
    elif normalisation == 'dictionary':
        def log_c(a):
            return lookup_l(dictionary, a)
    else:
        def log_c(a):
            return 0.0

    a0 = float(np.clip(a0_prior.rvs(rng), 1e-6 * M, (1 - 1e-6) * M))
    x = float(logit(a0 / M))
    log_step = np.log(2.4)
    q = model.dim(D0)

    if model.is_conjugate:
        theta = np.asarray(model.sample_conditional(D0, a0, D, rng, 1), dtype=float).reshape(q)
        kernel = None
    else:
        mode, chol = theta_init
        target = PowerPriorTarget(model, D0, a0, D)
        u, _ = initial_state(lambda v: float(target.log_density_unconstrained(v)), mode, chol, rng)
        kernel = AdaptiveRWM(chol, cfg.target_acceptance)
        theta = model.from_unconstrained(u)[0]

    theta_kept = np.empty((cfg.n_kept, q))
    a0_kept = np.empty(cfg.n_kept)
    n_acc_theta = n_acc_a0 = 0
    for t in range(cfg.n_iter):
        warmup = t < cfg.n_warmup
        # theta | a0
        if kernel is None:
            theta = np.asarray(model.sample_conditional(D0, a0, D, rng, 1), dtype=float).reshape(q)
            accepted_theta = True
        else:
            target = target.with_a0(a0)

            def f(v):
                return float(target.log_density_unconstrained(v))
            u, _, accepted_theta = kernel.step(u, f(u), f, rng, adapt=warmup)
            theta = model.from_unconstrained(u)[0]
        ll0 = float(model.log_likelihood(D0, theta))

        # a0 | theta on the logit scale of a0 / M
        x_new = x + np.exp(log_step) * rng.standard_normal()
        a0_new = M * float(expit(x_new))
        log_alpha = -np.inf
        if 0.0 < a0_new < M:
            def log_target(xx, aa):
                return (_a0_log_conditional(aa, ll0, a0_prior, log_c)
                        - np.logaddexp(0.0, -xx) - np.logaddexp(0.0, xx))
            lt_new = log_target(x_new, a0_new)
            if np.isfinite(lt_new):
                log_alpha = lt_new - log_target(x, a0)
        accepted_a0 = bool(np.log(rng.uniform()) < log_alpha)
        if accepted_a0:
            x, a0 = x_new, a0_new
        if warmup:
            log_step += (t + 1) ** -0.6 * (min(1.0, np.exp(log_alpha)) - A0_TARGET_ACCEPTANCE)
        else:
            theta_kept[t - cfg.n_warmup] = theta
            a0_kept[t - cfg.n_warmup] = a0
            n_acc_theta += accepted_theta
            n_acc_a0 += accepted_a0
    return theta_kept, a0_kept, n_acc_theta / cfg.n_kept, n_acc_a0 / cfg.n_kept


def _run_joint(model, D0, D, a0_prior, normalisation, dictionary, cfg, num_workers):
    theta_init = None
    if not model.is_conjugate:
        mode, chol, _ = laplace_fit(PowerPriorTarget(model, D0, a0_prior.mean(), D))
        theta_init = (mode, chol)
    jobs = [(model, D0, D, a0_prior, normalisation, dictionary, cfg, chain, theta_init)
            for chain in range(cfg.n_chains)]
    results = list(chunked_multiprocess_run(_joint_chain, jobs, num_workers=num_workers))
    theta = np.stack([r[0] for r in results])
    a0 = np.stack([r[1] for r in results])
    return theta, a0, float(np.mean([r[2] for r in results])), float(np.mean([r[3] for r in results]))


def sample_joint(model, D0: Dataset, D: Dataset, a0_prior: A0Prior, normalisation='dictionary',
                 cfg: ChainConfig = None, dictionary: Dictionary = None, num_workers=1) -> JointDraws:
    """
        Metropolis-within-Gibbs over (theta, a0). The a0 update targets
        pi_A(a0) L(D0|theta)^a0 / c(a0) with log c(a0) taken as 0 ('none'), from the closed
        form ('exact') or from ``dictionary``. Runs the diagnostics gate with one longer retry.
    """
    cfg = cfg or ChainConfig()
    if normalisation not in NORMALISATIONS:
        raise ConfigError(f'normalisation must be one of {NORMALISATIONS}, got \'{normalisation}\'.')
    model.check_data(D0)
    if D is not None:
        model.check_data(D)
    if normalisation == 'exact' and not model.is_conjugate:
        raise UnsupportedError(f'Exact normalisation needs a closed-form c(a0), which {model.family} lacks; '
                               f'build a dictionary instead.')
    if normalisation == 'dictionary':
        if dictionary is None:
            raise ConfigError('normalisation \'dictionary\' needs a dictionary.')
        if not dictionary.covers(0.0, a0_prior.M):
            raise DictionaryRangeError(f'Dictionary covers [{dictionary.lower}, {dictionary.upper}] but the a0 '
                                       f'prior lives on [0, {a0_prior.M}].')

    names = tuple(model.param_names(D0))
    run_cfg = cfg
    for attempt in range(cfg.max_retries + 1):
        theta, a0, acc_theta, acc_a0 = _run_joint(model, D0, D, a0_prior, normalisation, dictionary,
                                                  run_cfg, num_workers)
        diag = compute_diagnostics(np.concatenate([theta, a0[..., None]], axis=-1), names + ('a0',))
        failures = diag.failures(cfg.rhat_max, cfg.mcse_frac)
        if not failures or attempt == cfg.max_retries:
            break
        logger.info(f'| joint sampler ({normalisation}): diagnostics gate failed ({"; ".join(failures)}), '
                    f'retrying with {cfg.retry_factor}x iterations')
        run_cfg = run_cfg.scaled(cfg.retry_factor)
    if failures:
        logger.warning(f'| joint sampler ({normalisation}): diagnostics gate failed ({"; ".join(failures)})')
    dictionary_id = ''
    if dictionary is not None and normalisation == 'dictionary':
        dictionary_id = f'{dictionary.provenance}:K={dictionary.K}'
    return JointDraws(theta=theta, a0=a0, param_names=names, normalisation=normalisation, diagnostics=diag,
                      gate_passed=not failures, acceptance_theta=acc_theta, acceptance_a0=acc_a0,
                      dictionary_id=dictionary_id)


def _summary(samples):
    samples = np.asarray(samples, dtype=float).ravel()
    lo, hi = np.quantile(samples, [0.025, 0.975])
    return {'mean': float(np.mean(samples)), 'lower': float(lo), 'upper': float(hi)}


def summarise(draws):
    """Mean and central 95% interval per parameter of JointDraws or ChainOutput."""
    if getattr(draws, 'gate_passed', None) is False:
        logger.warning('| summarising draws that failed the diagnostics gate')
    if isinstance(draws, ChainOutput):
        flat = draws.flat()
        names = draws.param_names or tuple(f'x{i}' for i in range(flat.shape[1]))
        return {name: _summary(flat[:, i]) for i, name in enumerate(names)}
    return {name: _summary(values) for name, values in draws.columns().items()}


@dataclass(frozen=True, eq=False)
class SensitivityResult:
    """summaries[stage][i][param] with stage 'prior' or 'posterior' for a0_list[i]."""
    a0_list: np.ndarray
    param_names: tuple
    summaries: dict
    gate_passed: dict

    CSV_COLUMNS = ('a0', 'stage', 'parameter', 'mean', 'lower', 'upper', 'gate_passed')

    def to_rows(self):
        for i, a0 in enumerate(self.a0_list):
            for stage in ('prior', 'posterior'):
                for name in self.param_names:
                    s = self.summaries[stage][i][name]
                    yield [float(a0), stage, name, s['mean'], s['lower'], s['upper'], self.gate_passed[stage][i]]

    def intervals_overlap(self, name):
        """Per a0: do the prior-stage and posterior-stage intervals of ``name`` intersect?"""
        out = []
        for pr, po in zip(self.summaries['prior'], self.summaries['posterior']):
            out.append(pr[name]['lower'] <= po[name]['upper'] and po[name]['lower'] <= pr[name]['upper'])
        return np.array(out)


def sensitivity_analysis(model, D0: Dataset, D: Dataset, a0_list, cfg: ChainConfig = None, M=None,
                         num_workers=1) -> SensitivityResult:
    """Power prior and power posterior at each fixed a0, summarised by mean and 95% interval."""
    cfg = cfg or ChainConfig()
    a0_list = np.asarray(a0_list, dtype=float)
    if a0_list.ndim != 1 or a0_list.size == 0:
        raise SupportError('a0_list must be a non-empty list.')
    if np.any(np.diff(a0_list) <= 0) or a0_list[0] < 0 or (M is not None and a0_list[-1] > M):
        raise SupportError(f'a0_list must be strictly increasing inside [0, {M if M is not None else "inf"}].')
    names = tuple(model.param_names(D0))
    summaries = {'prior': [], 'posterior': []}
    gates = {'prior': [], 'posterior': []}
    for a0 in a0_list:
        for stage, current, tag in (('prior', None, 0), ('posterior', D, 1)):
            target = PowerPriorTarget(model, D0, a0, current)
            out = sample_power_posterior_gated(target, cfg, stream=(a0_stream(a0), tag), num_workers=num_workers)
            out = replace(out, param_names=names)
            summaries[stage].append(summarise(out))
            gates[stage].append(bool(out.gate_passed))
        logger.info(f'| a0={a0:.4g}: ' + ', '.join(
            f'{n} prior {summaries["prior"][-1][n]["mean"]:.4g} / posterior {summaries["posterior"][-1][n]["mean"]:.4g}'
            for n in names))
    return SensitivityResult(a0_list=a0_list, param_names=names, summaries=summaries, gate_passed=gates)
