import logging

import numpy as np

from basics.base_task import BaseTask
from basics.errors import ConfigError, DiagnosticsError, GridBuildError
from data_gen.datasets import true_parameters
from src.bridge import BridgeConfig
from src.conjugate import conjugate_constants
from src.curvefit import (Dictionary, curve_metrics, fit_l_curve, fit_l_from_derivative, grid_metrics,
                          predict_dictionary)
from src.evaluators import BridgeMCMCEvaluator, CountingEvaluator, build_evaluator
from src.gridbuilder import (GridBudget, GridResult, build_adaptive_grid, build_uniform_grid, choose_M_from_prior,
                             is_monotone_family)
from src.mcmc import ChainConfig
from src.posterior import A0Prior, exact_marginal_a0, sample_joint, sensitivity_analysis, summarise
from src.quadrature import QuadratureConfig
from utils import Timer, progress

logger = logging.getLogger(__name__)

DICTIONARY_VARIANTS = ('direct', 'derivative', 'both')
DICTIONARY_FILES = {'direct': 'dictionary.csv', 'derivative': 'dictionary_derivative.csv'}


class PowerPriorTask(BaseTask):
    """Shared pipeline pieces: a0 prior, budgets, grids and dictionaries."""

    def __init__(self, hparams):
        super().__init__(hparams)
        self.a0_prior = A0Prior.from_hparams(hparams)
        self.chain_cfg = ChainConfig.from_hparams(hparams)
        self.bridge_cfg = BridgeConfig.from_hparams(hparams)
        self.quad_cfg = QuadratureConfig.from_hparams(hparams)
        grid = hparams.get('grid') or {}
        M = grid.get('M', self.a0_prior.M)
        if M == 'prior_quantile':
            M = choose_M_from_prior(self.a0_prior, float(grid.get('p', 0.9999)))
            logger.info(f'| grid upper end from the a0 prior quantile: M={M:.6g}')
        self.budget = GridBudget.from_hparams(hparams, M=float(M))
        self.truth = conjugate_constants(self.model, self.historical) if self.model.is_conjugate else None
        dictionary = hparams.get('dictionary') or {}
        self.K = int(dictionary.get('K', 20000))
        self.variant = dictionary.get('variant', 'direct')
        if self.variant not in DICTIONARY_VARIANTS:
            raise ConfigError(f'dictionary.variant must be one of {DICTIONARY_VARIANTS}, got \'{self.variant}\'.')

    # grids
    def build_grid(self, mode=None, backend=None, fn='grid.csv'):
        grid_cfg = self.hparams.get('grid') or {}
        mode = mode or grid_cfg.get('mode', 'adaptive')
        backend = backend or grid_cfg.get('backend', 'bridge_mcmc')
        if mode not in ('adaptive', 'uniform'):
            raise ConfigError(f'grid.mode must be adaptive or uniform, got \'{mode}\'.')
        evaluator = CountingEvaluator(build_evaluator(backend, self.model, self.historical, self.hparams,
                                                      num_workers=self.num_workers))
        try:
            with Timer(f'{mode} grid', print_time=True):
                if mode == 'uniform':
                    grid = build_uniform_grid(evaluator, self.budget, self.num_workers)
                else:
                    grid = build_adaptive_grid(evaluator, self.budget, is_monotone_family(self.model),
                                               self.num_workers)
        except GridBuildError as e:
            if e.partial is not None and fn:
                self.write_grid(e.partial, fn.replace('.csv', '_partial.csv'))
            raise
        assert evaluator.n_calls == self.budget.J, (evaluator.n_calls, self.budget.J)
        if fn:
            self.write_grid(grid, fn)
        return grid

    def write_grid(self, grid: GridResult, fn):
        grid.to_csv(self.out_path(fn), self.provenance)
        self.write_json(fn.replace('.csv', '.json'), {
            'mode': grid.mode, 'backend': grid.backend, 'sign_change': grid.sign_change,
            'n_evaluations': grid.n_evaluations, 'diagnostics_ok': grid.diagnostics_ok,
            'J': self.budget.J, 'm': self.budget.m, 'M': self.budget.M, 'v1': self.budget.v1, 'v2': self.budget.v2,
            'monotone_family': is_monotone_family(self.model)})

    def load_or_build_grid(self):
        path = self.hparams.get('grid_path')
        if path:
            logger.info(f'| reading grid from {path}')
            return GridResult.from_csv(path)
        return self.build_grid()

    # dictionaries
    @property
    def dictionary_M(self):
        return max(self.budget.M, self.a0_prior.M)

    def extrapolated_range(self, grid: GridResult):
        """Part of the dictionary range above the last grid point, or None."""
        top = float(grid.Z[-1])
        return (top, self.dictionary_M) if self.dictionary_M > top else None

    def fit_dictionaries(self, grid: GridResult, variant=None, K=None):
        variant = variant or self.variant
        K = K or self.K
        beyond = self.extrapolated_range(grid)
        if beyond is not None:
            logger.warning(f'| dictionary on [0, {self.dictionary_M:.6g}] extrapolates the fitted curve over '
                           f'({beyond[0]:.6g}, {beyond[1]:.6g}]; extend grid.M to avoid it')
        out = {}
        if variant in ('direct', 'both'):
            out['direct'] = predict_dictionary(fit_l_curve(grid), K, 0.0, self.dictionary_M)
        if variant in ('derivative', 'both'):
            out['derivative'] = fit_l_from_derivative(grid, K, M=self.dictionary_M)
        return out

    def dictionary_metrics(self, dictionary: Dictionary, ranges=None):
        if self.truth is None:
            return None
        ranges = ranges or [(0.0, self.budget.M)]
        return {f'[{lo:g}, {hi:g}]': curve_metrics(dictionary, self.truth, (lo, hi)).to_dict() for lo, hi in ranges}

    def grid_metrics(self, grid: GridResult):
        return grid_metrics(grid, self.truth).to_dict() if self.truth is not None else None

    def write_dictionary(self, dictionary: Dictionary, fn, grid: GridResult = None):
        sidecar = {'J': self.budget.J, 'K': dictionary.K, 'm': self.budget.m, 'M': self.dictionary_M,
                   'backend': grid.backend if grid is not None else '', 'seed': self.seed,
                   'metrics': self.dictionary_metrics(dictionary),
                   'extrapolated': list(self.extrapolated_range(grid) or []) if grid is not None else []}
        dictionary.to_csv(self.out_path(fn), self.provenance, sidecar)

    def load_or_fit_dictionary(self):
        path = self.hparams.get('dictionary_path')
        if path:
            logger.info(f'| reading dictionary from {path}')
            return Dictionary.from_csv(path)
        grid = self.load_or_build_grid()
        variant = 'direct' if self.variant == 'both' else self.variant
        dictionary = self.fit_dictionaries(grid, variant)[variant]
        self.write_dictionary(dictionary, DICTIONARY_FILES[variant], grid)
        return dictionary

    # joint posterior
    def sample(self, normalisation, dictionary=None, fn=None):
        if self.current is None:
            raise ConfigError('Sampling the joint posterior needs current data (data.current).')
        with Timer(f'joint sampler ({normalisation})', print_time=True):
            draws = sample_joint(self.model, self.historical, self.current, self.a0_prior, normalisation,
                                 self.chain_cfg, dictionary, self.num_workers)
        if fn:
            self.write_csv(fn, draws.csv_columns, draws.to_rows())
        return draws

    def normalisation(self):
        normalisation = self.hparams.get('normalisation', 'dictionary')
        if normalisation not in ('none', 'exact', 'dictionary'):
            raise ConfigError(f'normalisation must be none, exact or dictionary, got \'{normalisation}\'.')
        return normalisation


class ConstantsTask(PowerPriorTask):
    """Bridge estimates of l(a0) (and the closed form when there is one) over a0_list."""
    name = 'constants'
    COLUMNS = ('a0', 'l_exact', 'l_bridge', 'se', 'l_prime_exact', 'l_prime_mcmc', 'l_prime_se', 'diagnostics_ok')

    def run(self):
        a0_list = [float(a) for a in (self.hparams.get('a0_list') or [])]
        if not a0_list:
            raise ConfigError('a0_list must not be empty.')
        if any(a < 0 for a in a0_list):
            raise ConfigError('a0_list entries must be non-negative.')
        evaluator = BridgeMCMCEvaluator(self.model, self.historical, self.chain_cfg, self.bridge_cfg,
                                        num_workers=self.num_workers)
        if self.num_workers > 1:
            results = evaluator.evaluate_many(a0_list, self.num_workers)
        else:
            results = [evaluator.evaluate(a) for a in progress(a0_list, desc='constants')]
        rows = []
        for r in results:
            l_exact = float(self.truth.log_c(r.a0)) if self.truth else np.nan
            lp_exact = float(self.truth.log_c_prime(r.a0)) if self.truth else np.nan
            rows.append([r.a0, l_exact, r.l, r.l_se, lp_exact, r.l_prime, r.l_prime_se, r.diagnostics_ok])
        self.write_csv('constants.csv', self.COLUMNS, rows)
        if self.truth:
            within = sum(abs(row[2] - row[1]) <= 3 * row[3] for row in rows)
            logger.info(f'| bridge within 3 se of the closed form at {within} of {len(rows)} points')
        return rows


class GridTask(PowerPriorTask):
    name = 'grid'

    def run(self):
        return self.build_grid()


class FitTask(PowerPriorTask):
    """Grid (built or read from grid_path), then dictionaries of the configured variant(s)."""
    name = 'fit'

    def run(self):
        grid = self.load_or_build_grid()
        dictionaries = self.fit_dictionaries(grid)
        for variant, dictionary in dictionaries.items():
            self.write_dictionary(dictionary, DICTIONARY_FILES[variant], grid)
        if self.truth is not None and len(dictionaries) > 1:
            rows = []
            for variant, dictionary in dictionaries.items():
                m = curve_metrics(dictionary, self.truth, (0.0, self.budget.M))
                rows.append([variant, m.mad, m.rmse, m.mrae])
            self.write_csv('fit_comparison.csv', ('variant', 'MAD', 'RMSE', 'MRAE'), rows)
        return dictionaries


class SampleTask(PowerPriorTask):
    name = 'sample'

    def run(self):
        normalisation = self.normalisation()
        dictionary = self.load_or_fit_dictionary() if normalisation == 'dictionary' else None
        draws = self.sample(normalisation, dictionary, fn='draws.csv')
        self.write_json('summary.json', {
            'normalisation': normalisation, 'summary': summarise(draws),
            'diagnostics': draws.diagnostics.to_dict(), 'gate_passed': draws.gate_passed,
            'acceptance': {'theta': draws.acceptance_theta, 'a0': draws.acceptance_a0},
            'dictionary': draws.dictionary_id})
        if not draws.gate_passed:
            raise DiagnosticsError('Joint sampler failed the diagnostics gate; see summary.json.')
        return draws


class SensitivityTask(PowerPriorTask):
    name = 'sensitivity'

    def run(self):
        if self.current is None:
            raise ConfigError('A sensitivity analysis needs current data (data.current).')
        a0_list = self.hparams.get('a0_list') or []
        if not a0_list:
            raise ConfigError('a0_list must not be empty.')
        result = sensitivity_analysis(self.model, self.historical, self.current, a0_list, self.chain_cfg,
                                      M=self.a0_prior.M, num_workers=self.num_workers)
        self.write_csv('sensitivity.csv', result.CSV_COLUMNS, result.to_rows())
        self.write_json('sensitivity.json', {
            'overlap': {name: result.intervals_overlap(name) for name in result.param_names},
            'a0': result.a0_list})
        return result


class ScenarioTask(PowerPriorTask):
    '''
        End-to-end reproduction of a named preset. ``scenario.report`` picks the report:
        1. *joint*:
            grid, dictionary, and a0/theta summaries under each normalisation, with KS distances
            to the exact a0 marginal when one exists (and an optional K sweep);
        2. *grid_comparison*:
            adaptive against uniform grids, curve metrics on several a0 ranges;
        3. *regression*:
            interval width, inclusion of the data-generating values and MSE per normalisation.
    '''
    name = 'scenario'

    def run(self):
        scenario = self.hparams.get('scenario') or {}
        report = scenario.get('report', 'joint')
        runners = {'joint': self.joint_report, 'grid_comparison': self.grid_comparison_report,
                   'regression': self.regression_report}
        if report not in runners:
            raise ConfigError(f'Unknown scenario report \'{report}\'. Available: {sorted(runners)}')
        result = runners[report](scenario)
        self.write_json('report.json', result)
        failed = [k for k, ok in result.get('gate_passed', {}).items() if not ok]
        if failed:
            raise DiagnosticsError(f'Diagnostics gate failed for: {", ".join(failed)}.')
        return result

    def _fit(self):
        grid = self.build_grid()
        dictionary = self.fit_dictionaries(grid, 'direct')['direct']
        self.write_dictionary(dictionary, DICTIONARY_FILES['direct'], grid)
        return grid, dictionary

    def _normalisations(self, scenario):
        wanted = scenario.get('normalisations', ['none', 'dictionary', 'exact'])
        if not self.model.is_conjugate:
            wanted = [n for n in wanted if n != 'exact']
        return wanted

    def joint_report(self, scenario):
        grid, dictionary = self._fit()
        exact = None
        if self.model.is_conjugate:
            exact = exact_marginal_a0(self.model, self.historical, self.current, self.a0_prior, self.quad_cfg.K_quad)
            self.write_csv('marginal_a0.csv', ('a0', 'density', 'cdf'), zip(exact.a0, exact.density, exact.cdf))
        out = {'grid_mode': grid.mode, 'grid_metrics': self.grid_metrics(grid),
               'dictionary_metrics': self.dictionary_metrics(dictionary),
               'summary': {}, 'ks_distance': {}, 'gate_passed': {}}
        if exact is not None:
            lo, hi = exact.interval()
            out['exact_marginal_a0'] = {'mean': exact.mean(), 'lower': lo, 'upper': hi}
        for normalisation in self._normalisations(scenario):
            draws = self.sample(normalisation, dictionary if normalisation == 'dictionary' else None,
                                fn=f'draws_{normalisation}.csv')
            out['summary'][normalisation] = summarise(draws)
            out['gate_passed'][normalisation] = bool(draws.gate_passed)
            if exact is not None:
                out['ks_distance'][normalisation] = exact.ks_distance(draws.a0)
        if scenario.get('K_sweep') and exact is not None:
            fit = fit_l_curve(grid)
            out['K_sweep'] = {}
            for K in scenario['K_sweep']:
                dictionary_K = predict_dictionary(fit, int(K), 0.0, self.dictionary_M)
                draws = self.sample('dictionary', dictionary_K)
                out['K_sweep'][str(K)] = exact.ks_distance(draws.a0)
                out['gate_passed'][f'K={K}'] = bool(draws.gate_passed)
        return out

    def grid_comparison_report(self, scenario):
        ranges = [tuple(r) for r in scenario.get('ranges', [[0.0, self.budget.M]])]
        out = {'metrics': {}, 'modes': {}}
        for mode in ('adaptive', 'uniform'):
            grid = self.build_grid(mode=mode, fn=f'grid_{mode}.csv')
            dictionary = self.fit_dictionaries(grid, 'direct')['direct']
            self.write_dictionary(dictionary, f'dictionary_{mode}.csv', grid)
            out['modes'][mode] = grid.mode
            out['metrics'][mode] = self.dictionary_metrics(dictionary, ranges)
        return out

    def regression_report(self, scenario):
        truth = true_parameters((self.hparams.get('data') or {}).get('current'))
        grid, dictionary = self._fit()
        names = tuple(self.model.param_names(self.historical))
        coefficient = [i for i, n in enumerate(names) if n != 'sigma2']
        out = {'grid_metrics': self.grid_metrics(grid), 'dictionary_metrics': self.dictionary_metrics(dictionary),
               'normalisations': {}, 'gate_passed': {}}
        for normalisation in self._normalisations(scenario):
            draws = self.sample(normalisation, dictionary if normalisation == 'dictionary' else None,
                                fn=f'draws_{normalisation}.csv')
            summary = summarise(draws)
            widths = [summary[n]['upper'] - summary[n]['lower'] for n in names]
            entry = {'summary': summary, 'mean_ci_width': float(np.mean(widths))}
            if truth is not None:
                means = np.array([summary[n]['mean'] for n in names])
                inside = [summary[n]['lower'] <= t <= summary[n]['upper'] for n, t in zip(names, truth)]
                entry['inclusion'] = int(np.sum(inside))
                entry['mse'] = float(np.mean((means[coefficient] - truth[coefficient]) ** 2))
            out['normalisations'][normalisation] = entry
            out['gate_passed'][normalisation] = bool(draws.gate_passed)
        if truth is not None:
            out['truth'] = dict(zip(names, truth))
        return out


TASKS = {cls.name: cls for cls in (ConstantsTask, GridTask, FitTask, SampleTask, SensitivityTask, ScenarioTask)}
