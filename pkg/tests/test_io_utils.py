import json

import numpy as np

from basics.base_task import RUNTIME_KEYS
from utils import Timer, canonical_json, config_hash, to_builtin
from utils.io_utils import provenance, read_csv, read_json, write_csv, write_json


class TestProvenance:
    def test_hash_is_order_independent(self):
        assert config_hash({'a': 1, 'b': [1, 2]}) == config_hash({'b': [1, 2], 'a': 1})
        assert config_hash({'a': 1}) != config_hash({'a': 2})

    def test_provenance_fields(self):
        prov = provenance({'seed': 9, 'grid': {'J': 20}})
        assert set(prov) == {'version', 'config_hash', 'seed'}
        assert prov['seed'] == 9

    def test_runtime_keys(self):
        assert set(RUNTIME_KEYS) == {'out_dir', 'debug', 'threads'}

    def test_to_builtin(self):
        obj = {'x': np.float64(1.5), 'y': np.arange(3), 'z': (np.bool_(True), 2)}
        assert to_builtin(obj) == {'x': 1.5, 'y': [0, 1, 2], 'z': [True, 2]}
        assert canonical_json({'b': 1, 'a': 2}) == '{"a":2,"b":1}'


class TestFiles:
    def test_csv(self, tmp_path):
        path = str(tmp_path / 'sub' / 'out.csv')
        write_csv(path, ('a0', 'l_hat', 'ok'), [(0.1, 1 / 3, True), (np.float64(0.2), np.nan, False)], {'seed': 1})
        prov, columns, rows = read_csv(path)
        assert prov == {'seed': '1'}
        assert columns == ['a0', 'l_hat', 'ok']
        assert rows[0] == ['0.10000000000000001', '0.33333333333333331', 'true']
        assert float(rows[0][1]) == 1 / 3
        assert rows[1][1] == 'nan' and rows[1][2] == 'false'

    def test_json(self, tmp_path):
        path = str(tmp_path / 'out.json')
        write_json(path, {'mean': np.float64(0.5), 'draws': np.zeros(2)}, {'seed': 1})
        obj = read_json(path)
        assert obj == {'mean': 0.5, 'draws': [0.0, 0.0], 'provenance': {'seed': 1}}
        with open(path) as f:
            assert json.load(f) == obj


def test_timer_accumulates():
    with Timer('unit-test'):
        pass
    with Timer('unit-test'):
        pass
    assert Timer.timer_map['unit-test'] >= 0.0
