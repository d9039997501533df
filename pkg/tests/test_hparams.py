import os

import pytest
import yaml

from basics.errors import ConfigError
from utils import hparams as hp
from utils.hparams import apply_overrides, load_config, override_config, set_hparams


def write_yaml(path, obj):
    path.write_text(yaml.safe_dump(obj))
    return str(path)


class TestOverrides:
    def test_nested_merge(self):
        config = {'grid': {'J': 20, 'm': 0.05}, 'seed': 1}
        override_config(config, {'grid': {'J': 10}, 'seed': 2})
        assert config == {'grid': {'J': 10, 'm': 0.05}, 'seed': 2}

    def test_dotted_keys_keep_types(self):
        config = {'grid': {'J': 20, 'm': 0.05, 'mode': 'adaptive'}, 'debug': False, 'a0_list': [0.5]}
        apply_overrides(config, 'grid.J=10,grid.m=0.1,grid.mode=uniform,debug=true,chain.n_iter=400')
        assert config['grid'] == {'J': 10, 'm': 0.1, 'mode': 'uniform'}
        assert config['debug'] is True
        assert config['chain'] == {'n_iter': 400}

    @pytest.mark.parametrize('bad', ['grid.J', 'grid.J=ten', 'debug=maybe', 'seed.x=1'])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            apply_overrides({'grid': {'J': 20}, 'debug': False, 'seed': 1}, bad)


class TestLoadConfig:
    def test_base_config_chain(self, tmp_path):
        (tmp_path / 'basics').mkdir()
        write_yaml(tmp_path / 'basics' / 'base.yaml', {'seed': 1, 'grid': {'J': 20, 'm': 0.05}})
        child = write_yaml(tmp_path / 'child.yaml', {'base_config': './basics/base.yaml', 'grid': {'J': 8}})
        chains = []
        config = load_config(child, config_chains=chains)
        assert config['seed'] == 1
        assert config['grid'] == {'J': 8, 'm': 0.05}
        assert chains == [os.path.normpath(str(tmp_path / 'basics' / 'base.yaml')), child]

    def test_missing_and_malformed(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / 'none.yaml'))
        bad = tmp_path / 'bad.yaml'
        bad.write_text('- just\n- a list\n')
        with pytest.raises(ConfigError):
            load_config(str(bad))


class TestSetHparams:
    def test_writes_resolved_config(self, tmp_path):
        config = write_yaml(tmp_path / 'c.yaml', {'seed': 3, 'grid': {'J': 20}})
        out = str(tmp_path / 'out')
        resolved = set_hparams(config, 'grid.J=5', out_dir=out, print_hparams=False)
        assert resolved['grid']['J'] == 5
        assert resolved['out_dir'] == out
        assert hp.hparams['seed'] == 3
        with open(os.path.join(out, 'config.yaml')) as f:
            assert yaml.safe_load(f)['grid']['J'] == 5

    def test_needs_a_config(self):
        with pytest.raises(ConfigError):
            set_hparams('', print_hparams=False)
