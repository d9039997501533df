import os

import numpy as np
import pytest
import yaml

import run
from basics.errors import EXIT_CONFIG, EXIT_OK
from src.conjugate import bern_log_c
from utils import Timer
from utils.io_utils import read_csv, read_json

BASE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs', 'basics', 'base.yaml')


def write_config(tmp_path, **overrides):
    config = {
        'base_config': BASE,
        'model': {'family': 'BetaBernoulli', 'c': 1.0, 'd': 1.0},
        'data': {'historical': {'generator': 'bernoulli', 'successes': 20, 'n': 100},
                 'current': {'generator': 'bernoulli', 'successes': 20, 'n': 100}},
        'grid': {'backend': 'closed_form', 'mode': 'uniform'},
        'dictionary': {'K': 2001, 'variant': 'direct'},
    }
    config.update(overrides)
    path = tmp_path / 'config.yaml'
    path.write_text(yaml.safe_dump(config))
    return str(path)


class TestGridAndFit:
    def test_grid(self, tmp_path):
        out = str(tmp_path / 'out')
        assert run.main(['grid', '--config', write_config(tmp_path), '--out', out]) == EXIT_OK
        prov, columns, rows = read_csv(os.path.join(out, 'grid.csv'))
        assert columns == ['a0', 'l_hat', 'l_prime_hat', 'l_se', 'l_prime_se', 'phase']
        assert len(rows) == 21
        assert prov['seed'] == '1234'
        a0 = np.array([float(r[0]) for r in rows])
        l = np.array([float(r[1]) for r in rows])
        np.testing.assert_allclose(l, bern_log_c(a0, 20, 100))
        assert read_json(os.path.join(out, 'grid.json'))['n_evaluations'] == 20
        assert os.path.exists(os.path.join(out, 'config.yaml'))
        assert 'uniform grid' in Timer.timer_map

    def test_rerun_is_byte_identical(self, tmp_path):
        config = write_config(tmp_path)
        for name in ('a', 'b'):
            assert run.main(['grid', '--config', config, '--out', str(tmp_path / name)]) == EXIT_OK
        with open(tmp_path / 'a' / 'grid.csv') as fa, open(tmp_path / 'b' / 'grid.csv') as fb:
            assert fa.read() == fb.read()

    def test_seed_flag(self, tmp_path):
        out = str(tmp_path / 'out')
        assert run.main(['grid', '--config', write_config(tmp_path), '--out', out, '--seed', '7']) == EXIT_OK
        prov, _, _ = read_csv(os.path.join(out, 'grid.csv'))
        assert prov['seed'] == '7'

    def test_fit_both_variants(self, tmp_path):
        out = str(tmp_path / 'out')
        config = write_config(tmp_path, dictionary={'K': 2001, 'variant': 'both'})
        assert run.main(['fit', '--config', config, '--out', out]) == EXIT_OK
        _, columns, rows = read_csv(os.path.join(out, 'dictionary.csv'))
        assert columns == ['a0', 'l_hat'] and len(rows) == 2001
        assert float(rows[0][1]) == 0.0
        assert os.path.exists(os.path.join(out, 'dictionary_derivative.csv'))
        _, columns, rows = read_csv(os.path.join(out, 'fit_comparison.csv'))
        assert [r[0] for r in rows] == ['direct', 'derivative']
        meta = read_json(os.path.join(out, 'dictionary.json'))
        assert meta['variant'] == 'direct' and meta['backend'] == 'closed_form'

    def test_dictionary_beyond_the_grid_is_flagged(self, tmp_path):
        out = str(tmp_path / 'out')
        config = write_config(tmp_path, grid={'backend': 'closed_form', 'mode': 'uniform',
                                              'M': 'prior_quantile', 'p': 0.9})
        assert run.main(['fit', '--config', config, '--out', out]) == EXIT_OK
        _, _, rows = read_csv(os.path.join(out, 'dictionary.csv'))
        assert float(rows[-1][0]) == 1.0
        meta = read_json(os.path.join(out, 'dictionary.json'))
        assert meta['extrapolated'] == pytest.approx([0.9, 1.0])
        assert read_json(os.path.join(out, 'grid.json'))['M'] == pytest.approx(0.9)

    def test_dictionary_inside_the_grid_is_not_flagged(self, tmp_path):
        out = str(tmp_path / 'out')
        assert run.main(['fit', '--config', write_config(tmp_path), '--out', out]) == EXIT_OK
        assert read_json(os.path.join(out, 'dictionary.json'))['extrapolated'] == []

    def test_fit_from_existing_grid(self, tmp_path):
        grid_out = str(tmp_path / 'grid')
        config = write_config(tmp_path)
        assert run.main(['grid', '--config', config, '--out', grid_out]) == EXIT_OK
        out = str(tmp_path / 'fit')
        grid_path = os.path.join(grid_out, 'grid.csv')
        assert run.main(['fit', '--config', config, '--out', out, '--hparams', f'grid_path={grid_path}']) == EXIT_OK
        assert os.path.exists(os.path.join(out, 'dictionary.csv'))
        assert not os.path.exists(os.path.join(out, 'grid.csv'))


class TestSamplingCommands:
    def test_constants(self, tmp_path):
        out = str(tmp_path / 'out')
        config = write_config(tmp_path, a0_list=[0.25, 0.5, 1.0])
        assert run.main(['constants', '--config', config, '--out', out]) == EXIT_OK
        _, columns, rows = read_csv(os.path.join(out, 'constants.csv'))
        assert columns[:3] == ['a0', 'l_exact', 'l_bridge']
        assert len(rows) == 3
        for row in rows:
            l_exact, l_bridge, se = (float(v) for v in row[1:4])
            assert abs(l_bridge - l_exact) < 6 * se

    def test_sample_exact(self, tmp_path):
        out = str(tmp_path / 'out')
        config = write_config(tmp_path, normalisation='exact')
        assert run.main(['sample', '--config', config, '--out', out]) == EXIT_OK
        _, columns, rows = read_csv(os.path.join(out, 'draws.csv'))
        assert columns == ['theta', 'a0', 'chain', 'iter']
        summary = read_json(os.path.join(out, 'summary.json'))
        assert summary['gate_passed'] is True
        assert set(summary['summary']) == {'theta', 'a0'}

    def test_sensitivity(self, tmp_path):
        out = str(tmp_path / 'out')
        config = write_config(tmp_path, a0_list=[0.2, 0.6])
        assert run.main(['sensitivity', '--config', config, '--out', out]) == EXIT_OK
        _, columns, rows = read_csv(os.path.join(out, 'sensitivity.csv'))
        assert len(rows) == 4
        assert columns[:3] == ['a0', 'stage', 'parameter']


class TestErrors:
    def test_missing_config_file(self, tmp_path):
        assert run.main(['grid', '--config', str(tmp_path / 'nope.yaml')]) == EXIT_CONFIG

    def test_config_required(self):
        assert run.main(['grid']) == EXIT_CONFIG

    def test_unknown_scenario(self):
        assert run.main(['scenario', 'bernoulli-99']) == EXIT_CONFIG

    def test_missing_seed(self, tmp_path):
        assert run.main(['grid', '--config', write_config(tmp_path, seed=None),
                         '--out', str(tmp_path / 'out')]) == EXIT_CONFIG

    def test_bad_schema_version(self, tmp_path):
        assert run.main(['grid', '--config', write_config(tmp_path, schema_version=2),
                         '--out', str(tmp_path / 'out')]) == EXIT_CONFIG

    def test_empty_a0_list(self, tmp_path):
        assert run.main(['constants', '--config', write_config(tmp_path, a0_list=[]),
                         '--out', str(tmp_path / 'out')]) == EXIT_CONFIG

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            run.main(['train'])


def test_every_scenario_preset_resolves():
    from utils.hparams import set_hparams
    for name in run.scenario_names():
        hparams = set_hparams(os.path.join(run.SCENARIO_DIR, f'{name}.yaml'), print_hparams=False,
                              global_hparams=False)
        assert hparams['seed'] == 1234
        assert 'family' in hparams['model']
        assert hparams['scenario']['report'] in ('joint', 'grid_comparison', 'regression')
