import logging

import numpy as np

from basics.base_evaluator import BaseEvaluator, EvaluationResult, get_evaluator_cls, register_evaluator
from basics.base_model import PowerPriorTarget
from basics.errors import ConfigError
from src.bridge import BridgeConfig, bridge_log_c
from src.mcmc import ChainConfig, a0_stream, chain_rng, estimate_l_prime, sample_power_posterior_gated

logger = logging.getLogger(__name__)


@register_evaluator
class ClosedFormEvaluator(BaseEvaluator):
    """Exact l and l' from a conjugate family's closed forms."""
    backend = 'closed_form'

    def __init__(self, model, historical):
        self.model = model
        self.historical = historical
        model.check_data(historical)
        model.log_c(historical, 0.0)  # UnsupportedError for non-conjugate families

    def evaluate(self, a0):
        a0 = float(a0)
        return EvaluationResult(a0=a0, l=float(self.model.log_c(self.historical, a0)),
                                l_prime=float(self.model.log_c_prime(self.historical, a0)))


@register_evaluator
class BridgeMCMCEvaluator(BaseEvaluator):
    """
        Power-prior draws at a0 (gated), then l' as the mean of the log-likelihood trace
        and l from bridge sampling on the same draws.
    """
    backend = 'bridge_mcmc'
    estimates_l = True

    def __init__(self, model, historical, chain_cfg: ChainConfig = None, bridge_cfg: BridgeConfig = None,
                 num_workers=1):
        self.model = model
        self.historical = historical
        self.chain_cfg = chain_cfg or ChainConfig()
        self.bridge_cfg = bridge_cfg or BridgeConfig()
        self.num_workers = num_workers
        model.check_data(historical)

    def evaluate(self, a0):
        a0 = float(a0)
        target = PowerPriorTarget(self.model, self.historical, a0)
        stream = a0_stream(a0)
        out = sample_power_posterior_gated(target, self.chain_cfg, stream=stream, num_workers=self.num_workers)
        l_prime, l_prime_se = estimate_l_prime(out)
        l, l_se = np.nan, np.nan
        if self.estimates_l:
            rng = chain_rng(self.chain_cfg.seed, stream, self.chain_cfg.n_chains)
            l, l_se = bridge_log_c(target, out, self.bridge_cfg, rng)
        logger.debug(f'| {self.backend} a0={a0:.6g}: l={l:.8g} (se {l_se:.3g}), '
                     f'l\'={l_prime:.8g} (se {l_prime_se:.3g}), acceptance={out.acceptance_rate:.3f}')
        return EvaluationResult(a0=a0, l=float(l), l_prime=l_prime, l_se=float(l_se), l_prime_se=l_prime_se,
                                diagnostics_ok=bool(out.gate_passed))


@register_evaluator
class DerivativeMCMCEvaluator(BridgeMCMCEvaluator):
    """Only l' (l is NaN); for the derivative-integration dictionary."""
    backend = 'derivative_mcmc'
    estimates_l = False


@register_evaluator
class FunctionEvaluator(BaseEvaluator):
    """Wraps plain callables; ``l_prime_se`` may be a constant or a callable."""
    backend = 'function'

    def __init__(self, l_func, l_prime_func, l_prime_se=0.0):
        self.l_func = l_func
        self.l_prime_func = l_prime_func
        self.l_prime_se = l_prime_se

    def evaluate(self, a0):
        a0 = float(a0)
        se = self.l_prime_se(a0) if callable(self.l_prime_se) else self.l_prime_se
        return EvaluationResult(a0=a0, l=float(self.l_func(a0)), l_prime=float(self.l_prime_func(a0)),
                                l_prime_se=float(se))


class CountingEvaluator(BaseEvaluator):
    """Records every a0 it is asked for before delegating."""

    def __init__(self, inner: BaseEvaluator):
        self.inner = inner
        self.backend = inner.backend
        self.calls = []

    @property
    def n_calls(self):
        return len(self.calls)

    def evaluate(self, a0):
        self.calls.append(float(a0))
        return self.inner.evaluate(a0)

    def evaluate_many(self, a0s, num_workers=None):
        a0s = [float(a) for a in a0s]
        self.calls.extend(a0s)
        return self.inner.evaluate_many(a0s, num_workers)


def build_evaluator(backend, model, historical, hparams=None, num_workers=1):
    hparams = hparams or {}
    cls = get_evaluator_cls(backend)
    if cls is ClosedFormEvaluator:
        return cls(model, historical)
    if issubclass(cls, BridgeMCMCEvaluator):
        return cls(model, historical, ChainConfig.from_hparams(hparams), BridgeConfig.from_hparams(hparams),
                   num_workers=num_workers)
    raise ConfigError(f'Backend \'{backend}\' cannot be built from a config.')
