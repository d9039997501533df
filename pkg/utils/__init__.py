import hashlib
import json
import logging
import sys
import time

import numpy as np
from tqdm import tqdm

__version__ = '1.0.0'

logger = logging.getLogger(__name__)


def to_builtin(obj):
    """numpy scalars/arrays and tuples to plain JSON-able Python objects."""
    if isinstance(obj, dict):
        return {str(k): to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_builtin(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def canonical_json(obj):
    return json.dumps(to_builtin(obj), sort_keys=True, separators=(',', ':'))


def config_hash(config):
    return hashlib.sha256(canonical_json(config).encode('utf-8')).hexdigest()


def progress(iterable, desc=None, total=None, disable=None):
    if disable is None:
        disable = not sys.stderr.isatty()
    return tqdm(iterable, desc=desc, total=total, disable=disable, leave=False)


class Timer:
    timer_map = {}

    def __init__(self, name, print_time=False):
        if name not in Timer.timer_map:
            Timer.timer_map[name] = 0
        self.name = name
        self.print_time = print_time

    def __enter__(self):
        self.t = time.time()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        Timer.timer_map[self.name] += time.time() - self.t
        if self.print_time:
            logger.info(f'| {self.name}: {Timer.timer_map[self.name]:.2f}s')
