import numpy as np
import pytest
from scipy import optimize

from basics.base_evaluator import EvaluationResult
from basics.errors import ConfigError, GridBuildError, NumericalError, SupportError
from src.conjugate import bern_log_c, ng_log_c_prime
from src.evaluators import ClosedFormEvaluator, CountingEvaluator, FunctionEvaluator
from src.gridbuilder import (GridBudget, GridResult, build_adaptive_grid, build_uniform_grid, choose_M_from_prior,
                             derivative_sign, is_monotone_family)
from src.posterior import A0Prior


def parabola(centre=3.0):
    """l(a0) = (a0 - centre)^2 with its exact derivative."""
    return FunctionEvaluator(lambda a: (a - centre) ** 2, lambda a: 2 * (a - centre))


def final_bracket(grid):
    keep = np.isin(grid.phase, ('endpoint', 'bisection'))
    Z, Fp = grid.Z[keep], grid.Fprime[keep]
    return Z[Fp < 0].max(), Z[Fp > 0].min()


class TestGridBudget:
    @pytest.mark.parametrize('kwargs', [{'J': 2}, {'m': 0.0}, {'m': 2.0, 'M': 1.0}, {'v1': 0.0}, {'v2': -1.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            GridBudget(**kwargs)

    def test_from_hparams_with_M_override(self):
        budget = GridBudget.from_hparams({'grid': {'J': 12, 'm': 0.1, 'M': 'prior_quantile', 'v1': 4}}, M=2.0)
        assert (budget.J, budget.m, budget.M, budget.v1, budget.v2) == (12, 0.1, 2.0, 4, 10.0)


class TestUniformGrid:
    def test_three_point_example(self):
        grid = build_uniform_grid(parabola(), GridBudget(J=3, m=0.05, M=1.0))
        np.testing.assert_allclose(grid.Z, [0.0, 0.05, 0.525, 1.0])
        assert grid.phase == ('free', 'uniform', 'uniform', 'uniform')
        assert grid.F[0] == 0.0 and np.isnan(grid.Fprime[0])
        assert grid.n_evaluations == 3

    def test_spends_exactly_J(self, bernoulli, bernoulli_data):
        ev = CountingEvaluator(ClosedFormEvaluator(bernoulli, bernoulli_data))
        grid = build_uniform_grid(ev, GridBudget(J=20))
        assert ev.n_calls == 20
        assert grid.Z.size == 21
        np.testing.assert_allclose(grid.F[1:], bern_log_c(grid.Z[1:], 20, 100))


class TestAdaptiveGrid:
    BUDGET = GridBudget(J=20, m=0.05, M=10.0, v1=10, v2=10)

    def test_brackets_the_minimum(self):
        ev = CountingEvaluator(parabola())
        grid = build_adaptive_grid(ev, self.BUDGET)
        assert grid.mode == 'bisection'
        assert abs(grid.sign_change - 3.0) < 0.5
        lo, hi = final_bracket(grid)
        assert lo < 3.0 < hi
        assert hi - lo <= max(0.5, 9.95 * 2.0 ** -18)
        assert ev.n_calls == 20
        assert grid.Z.size == 21
        assert np.all(np.diff(grid.Z) > 0)
        assert grid.Z[0] == 0.0 and grid.Z[-1] <= 10.0

    def test_gaussian_points_cluster_around_the_sign_change(self, normal_gamma, gaussian_data_50):
        args = (0.0, 5.0, 1.0, 1.0)
        z_star = optimize.brentq(lambda a: ng_log_c_prime(a, gaussian_data_50, *args), 1e-9, 10.0)
        grid = build_adaptive_grid(ClosedFormEvaluator(normal_gamma, gaussian_data_50), self.BUDGET)
        assert grid.mode == 'bisection'
        adaptive = grid.Z[np.isin(grid.phase, ('bisection', 'gap'))]
        inside = np.abs(adaptive - z_star) <= self.BUDGET.v2 * self.BUDGET.m
        assert 2 * np.count_nonzero(inside) >= adaptive.size

    def test_endpoints_are_evaluated_first(self):
        ev = CountingEvaluator(parabola())
        build_adaptive_grid(ev, self.BUDGET)
        assert ev.calls[:2] == [0.05, 10.0]

    def test_gap_points_stay_in_the_window(self):
        grid = build_adaptive_grid(parabola(), self.BUDGET)
        gaps = grid.Z[np.array(grid.phase) == 'gap']
        assert gaps.size > 0
        assert np.all(np.abs(gaps - grid.sign_change) <= 0.5 + 1e-12)

    def test_same_sign_falls_back_to_uniform(self):
        grid = build_adaptive_grid(parabola(centre=20.0), self.BUDGET)
        assert grid.mode == 'uniform'
        np.testing.assert_allclose(grid.Z[1:], np.linspace(0.05, 10.0, 20))

    def test_monotone_hint(self, bernoulli, bernoulli_data):
        assert is_monotone_family(bernoulli)
        grid = build_adaptive_grid(ClosedFormEvaluator(bernoulli, bernoulli_data), GridBudget(), monotone_hint=True)
        assert grid.mode == 'uniform'
        assert set(grid.phase) == {'free', 'endpoint', 'uniform'}

    def test_undetermined_sign_stops_bisection(self):
        ev = FunctionEvaluator(lambda a: (a - 3.0) ** 2, lambda a: 2 * (a - 3.0), l_prime_se=lambda a: 1.0)
        grid = build_adaptive_grid(ev, self.BUDGET)
        # |l'| <= 3 se as soon as a midpoint lands within 1.5 of the minimum
        bis = grid.Z[np.array(grid.phase) == 'bisection']
        np.testing.assert_allclose(bis, [2.5375, 5.025])
        assert grid.sign_change == pytest.approx(2.5375)
        assert grid.n_evaluations == 20

    def test_failure_carries_the_partial_grid(self):
        def l_prime(a):
            return a - 0.5

        def l(a):
            if 0.3 < a < 0.7:
                raise NumericalError('sampler exploded')
            return 0.5 * (a - 0.5) ** 2

        with pytest.raises(GridBuildError) as info:
            build_adaptive_grid(FunctionEvaluator(l, l_prime), GridBudget(J=10))
        partial = info.value.partial
        assert isinstance(partial, GridResult)
        np.testing.assert_allclose(partial.Z, [0.0, 0.05, 1.0])


class TestHelpers:
    def test_choose_M_from_prior(self):
        assert choose_M_from_prior(A0Prior(1.0, 1.0), 0.9999) == pytest.approx(0.9999)
        assert choose_M_from_prior(A0Prior(1.0, 1.0, M=10.0), 0.5) == pytest.approx(5.0)
        with pytest.raises(SupportError):
            choose_M_from_prior(A0Prior(), 1.0)

    def test_derivative_sign(self):
        assert derivative_sign(EvaluationResult(0.5, 0.0, -2.0, l_prime_se=0.1)) == -1
        assert derivative_sign(EvaluationResult(0.5, 0.0, 0.2, l_prime_se=0.1)) == 0
        assert derivative_sign(EvaluationResult(0.5, 0.0, 0.2)) == 1
        assert derivative_sign(EvaluationResult(0.5, 0.0, np.nan)) == 0

    def test_csv(self, tmp_path, bernoulli, bernoulli_data):
        grid = build_uniform_grid(ClosedFormEvaluator(bernoulli, bernoulli_data), GridBudget(J=5))
        path = tmp_path / 'grid.csv'
        grid.to_csv(str(path), {'seed': 1, 'mode': 'uniform'})
        text = path.read_text()
        assert text.startswith('# seed: 1\n# mode: uniform\na0,l_hat,l_prime_hat,l_se,l_prime_se,phase\n')
        loaded = GridResult.from_csv(str(path))
        np.testing.assert_array_equal(loaded.Z, grid.Z)
        np.testing.assert_array_equal(loaded.F, grid.F)
        assert loaded.phase == grid.phase
        assert loaded.mode == 'uniform'
