"""
    CSV and JSON writers shared by every output of the pipeline.

    CSV files start with '#'-prefixed provenance lines followed by a header row.
    Floats are rendered with 17 significant digits and nothing time-dependent is written,
    so reruns with the same config and seed produce identical bytes.
"""
import csv
import json
import os

import numpy as np

from utils import __version__, config_hash, to_builtin

FLOAT_FMT = '%.17g'


def provenance(config, seed=None):
    seed = config.get('seed') if seed is None else seed
    return {'version': __version__, 'config_hash': config_hash(config), 'seed': seed}


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    if isinstance(v, (bool, np.bool_)):
        return 'true' if v else 'false'
    return str(v)


def write_csv(path, columns, rows, prov=None):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        for k, v in (prov or {}).items():
            f.write(f'# {k}: {v}\n')
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def read_csv(path):
    """Returns ``(provenance dict, columns, rows)`` with rows as lists of strings."""
    prov, lines = {}, []
    with open(path, encoding='utf-8', newline='') as f:
        for line in f:
            if line.startswith('#'):
                k, _, v = line[1:].strip().partition(':')
                prov[k.strip()] = v.strip()
            else:
                lines.append(line)
    reader = csv.reader(lines)
    columns = next(reader)
    return prov, columns, [row for row in reader if row]


def write_json(path, obj, prov=None):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    payload = dict(to_builtin(obj))
    if prov is not None:
        payload['provenance'] = prov
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True, allow_nan=True)
        f.write('\n')


def read_json(path):
    with open(path, encoding='utf-8') as f:
        return json.load(f)
