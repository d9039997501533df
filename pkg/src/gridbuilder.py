"""
    Spending a budget of J evaluations of l(a0), l'(a0) on an estimation grid over [m, M].

    Every evaluator call counts against J; the analytic point (0, 0) is added for free.
    When l' has the same sign at both ends (or the family is known to be monotone) the
    budget goes to a regular grid. Otherwise the sign change of l' is bisected until the
    bracket is narrower than v1 * m, and the remaining budget plugs the widest gaps in a
    window of half-width v2 * m around the last bisection point.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from basics.base_evaluator import BaseEvaluator, EvaluationResult
from basics.errors import ConfigError, GridBuildError, PowerPriorError, SupportError
from utils.io_utils import read_csv, write_csv

logger = logging.getLogger(__name__)

CSV_COLUMNS = ('a0', 'l_hat', 'l_prime_hat', 'l_se', 'l_prime_se', 'phase')
PHASES = ('free', 'endpoint', 'bisection', 'gap', 'uniform')


@dataclass(frozen=True)
class GridBudget:
    J: int = 20
    m: float = 0.05
    M: float = 1.0
    v1: float = 10.0
    v2: float = 10.0

    def __post_init__(self):
        if not 0 < self.m < self.M:
            raise ConfigError(f'Need 0 < m < M, got m={self.m}, M={self.M}.')
        if self.J < 3:
            raise ConfigError(f'The evaluation budget J must be at least 3, got {self.J}.')
        if not (self.v1 > 0 and self.v2 > 0):
            raise ConfigError('v1 and v2 must be positive.')

    @classmethod
    def from_hparams(cls, hparams, M=None):
        section = dict(hparams.get('grid') or {})
        kwargs = {k: section[k] for k in ('J', 'm', 'M', 'v1', 'v2') if k in section}
        if M is not None:
            kwargs['M'] = M
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class GridResult:
    Z: np.ndarray
    F: np.ndarray
    Fprime: np.ndarray
    l_se: np.ndarray
    l_prime_se: np.ndarray
    phase: tuple
    mode: str
    backend: str = ''
    sign_change: Optional[float] = None
    diagnostics_ok: bool = True

    @property
    def n_evaluations(self):
        return sum(p != 'free' for p in self.phase)

    def training_points(self, with_zero=True):
        keep = np.isfinite(self.F)
        if not with_zero:
            keep &= self.Z > 0
        return self.Z[keep], self.F[keep]

    def to_csv(self, path, prov=None):
        rows = zip(self.Z, self.F, self.Fprime, self.l_se, self.l_prime_se, self.phase)
        write_csv(path, CSV_COLUMNS, rows, prov)

    @classmethod
    def from_csv(cls, path, mode='', backend=''):
        prov, columns, rows = read_csv(path)
        if tuple(columns) != CSV_COLUMNS:
            raise ConfigError(f'{path}: expected columns {CSV_COLUMNS}, got {tuple(columns)}.')
        cols = list(zip(*rows))
        num = [np.array(c, dtype=float) for c in cols[:5]]
        mode = mode or prov.get('mode', '')
        return cls(*num, phase=tuple(cols[5]), mode=mode, backend=backend or prov.get('backend', ''))


def _grid_from_records(records, mode, backend, sign_change=None):
    free = EvaluationResult(a0=0.0, l=0.0, l_prime=np.nan, l_se=0.0, l_prime_se=np.nan)
    items = sorted([(free, 'free')] + list(records), key=lambda r: r[0].a0)
    Z = np.array([r.a0 for r, _ in items])
    assert np.all(np.diff(Z) > 0), 'grid points must be strictly increasing'
    return GridResult(Z=Z, F=np.array([r.l for r, _ in items]), Fprime=np.array([r.l_prime for r, _ in items]),
                      l_se=np.array([r.l_se for r, _ in items]),
                      l_prime_se=np.array([r.l_prime_se for r, _ in items]),
                      phase=tuple(p for _, p in items), mode=mode, backend=backend, sign_change=sign_change,
                      diagnostics_ok=all(r.diagnostics_ok for r, _ in items))


def derivative_sign(result: EvaluationResult):
    """+1/-1, or 0 when |l'| is within three standard errors of zero."""
    se = result.l_prime_se if np.isfinite(result.l_prime_se) else 0.0
    if not np.isfinite(result.l_prime) or abs(result.l_prime) <= 3.0 * se:
        return 0
    return int(np.sign(result.l_prime))


def choose_M_from_prior(prior_A, p):
    """Upper grid endpoint as the p-quantile of the a0 prior."""
    if not 0 < p < 1:
        raise SupportError(f'Quantile level must lie in (0, 1), got {p}.')
    return float(prior_A.ppf(p))


def is_monotone_family(model):
    return bool(model.is_monotone)


class _BudgetedCaller:
    def __init__(self, evaluator: BaseEvaluator, budget: GridBudget, mode):
        self.evaluator = evaluator
        self.remaining = budget.J
        self.records = []
        self.mode = mode

    def partial(self):
        return _grid_from_records(self.records, self.mode, self.evaluator.backend)

    def _failed(self, a0, e):
        return GridBuildError(f'Evaluator failed at a0={a0}: {e}', partial=self.partial())

    def call(self, a0, phase):
        assert self.remaining > 0, 'evaluation budget exhausted'
        try:
            res = self.evaluator.evaluate(a0)
        except PowerPriorError as e:
            raise self._failed(a0, e) from e
        self.remaining -= 1
        self.records.append((res, phase))
        return res

    def call_many(self, a0s, phase, num_workers=None):
        assert len(a0s) <= self.remaining, 'evaluation budget exhausted'
        try:
            results = self.evaluator.evaluate_many(a0s, num_workers)
        except PowerPriorError as e:
            raise self._failed(list(a0s), e) from e
        self.remaining -= len(results)
        self.records.extend((r, phase) for r in results)
        return results


def build_uniform_grid(evaluator: BaseEvaluator, budget: GridBudget = None, num_workers=None):
    budget = budget or GridBudget()
    caller = _BudgetedCaller(evaluator, budget, 'uniform')
    caller.call_many(np.linspace(budget.m, budget.M, budget.J), 'uniform', num_workers)
    logger.info(f'| uniform grid: {budget.J} evaluations on [{budget.m}, {budget.M}]')
    return caller.partial()


def _plug_gaps(caller: _BudgetedCaller, budget: GridBudget, centre):
    lo = max(0.0, centre - budget.v2 * budget.m)
    hi = min(centre + budget.v2 * budget.m, budget.M)
    while caller.remaining > 0:
        Z = np.array(sorted([0.0] + [r.a0 for r, _ in caller.records]))
        inside = Z[(Z >= lo) & (Z <= hi)]
        if inside.size < 2:
            inside = Z
        widths = np.diff(inside)
        i = int(np.argmax(widths))  # first maximum, i.e. the smaller a0 on ties
        caller.call(0.5 * (inside[i] + inside[i + 1]), 'gap')


def build_adaptive_grid(evaluator: BaseEvaluator, budget: GridBudget = None, monotone_hint=False,
                        num_workers=None):
    """
        Evaluates m and M first. Same (or undetermined) signs of l' there, or
        ``monotone_hint``, switch to a regular grid strictly inside (m, M).
    """
    budget = budget or GridBudget()
    caller = _BudgetedCaller(evaluator, budget, 'bisection')
    r_m = caller.call(budget.m, 'endpoint')
    r_M = caller.call(budget.M, 'endpoint')
    s_m, s_M = derivative_sign(r_m), derivative_sign(r_M)

    if monotone_hint or s_m == 0 or s_M == 0 or s_m == s_M:
        caller.mode = 'uniform'
        interior = np.linspace(budget.m, budget.M, budget.J)[1:-1]
        caller.call_many(interior, 'uniform', num_workers)
        reason = 'monotone family' if monotone_hint else f'sign(l\'(m))={s_m}, sign(l\'(M))={s_M}'
        logger.info(f'| adaptive grid: uniform mode ({reason})')
        return caller.partial()

    lo, hi = budget.m, budget.M
    z_prev = budget.M
    while caller.remaining > 0:
        z = 0.5 * (lo + hi)
        s = derivative_sign(caller.call(z, 'bisection'))
        delta = abs(z - z_prev)
        z_prev = z
        if s == 0:
            break
        if s == s_m:
            lo = z
        else:
            hi = z
        if delta < budget.v1 * budget.m:
            break
    logger.info(f'| adaptive grid: sign change of l\' bracketed in [{lo:.6g}, {hi:.6g}], '
                f'{caller.remaining} evaluations left for gap plugging')
    _plug_gaps(caller, budget, z_prev)
    return _grid_from_records(caller.records, 'bisection', evaluator.backend, sign_change=z_prev)
