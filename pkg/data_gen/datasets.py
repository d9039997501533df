"""
    Historical and current datasets for a run: CSV files or seeded synthetic generators.

    A data section looks like::

        data:
          historical: {generator: bernoulli, successes: 20, n: 100}
          current: {generator: linreg, n: 100, P: 4, beta: [-1, 1, 0.5, -0.5], sigma2: 4}

    Generators draw from ``np.random.default_rng([seed, offset])`` with offset 0 for the
    historical and 1 for the current data unless the entry sets its own ``seed``.
"""
import logging
import os

import numpy as np
from scipy.special import expit

from basics.base_model import Dataset
from basics.errors import ConfigError
from utils.io_utils import read_csv

logger = logging.getLogger(__name__)

GENERATORS = {}
ROLE_OFFSETS = {'historical': 0, 'current': 1}


def register_generator(name):
    def wrap(fn):
        GENERATORS[name] = fn
        return fn
    return wrap


def _coefficients(beta, P):
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    return np.resize(beta, int(P)) if P is not None else beta


@register_generator('bernoulli')
def bernoulli_data(rng, successes, n):
    return Dataset.from_counts(successes, n)


@register_generator('binomial')
def binomial_data(rng, n, p):
    return Dataset(y=(rng.uniform(size=int(n)) < p).astype(float), kind='binary')


@register_generator('poisson')
def poisson_data(rng, n, lam):
    return Dataset(y=rng.poisson(lam, size=int(n)).astype(float), kind='count')


@register_generator('gaussian')
def gaussian_data(rng, n, mu, tau):
    """Normal observations with mean mu and precision tau."""
    return Dataset(y=rng.normal(mu, 1.0 / np.sqrt(tau), size=int(n)), kind='real')


@register_generator('linreg')
def linreg_data(rng, n, beta, sigma2, P=None):
    beta = _coefficients(beta, P)
    X = rng.standard_normal((int(n), beta.size))
    y = X @ beta + np.sqrt(sigma2) * rng.standard_normal(int(n))
    return Dataset(y=y, X=X, kind='real')


@register_generator('logistic')
def logistic_data(rng, n, alpha, beta, P=None):
    beta = _coefficients(beta, P)
    X = rng.standard_normal((int(n), beta.size))
    y = (rng.uniform(size=int(n)) < expit(alpha + X @ beta)).astype(float)
    return Dataset(y=y, X=X, kind='binary')


def load_csv(path, kind='real', response='y'):
    """A CSV with a response column and any number of covariate columns."""
    if not os.path.exists(path):
        raise ConfigError(f'Data file \'{path}\' does not exist.')
    _, columns, rows = read_csv(path)
    if response not in columns:
        raise ConfigError(f'{path}: no response column \'{response}\' in {columns}.')
    values = np.array(rows, dtype=float).reshape(len(rows), len(columns))
    j = columns.index(response)
    X = np.delete(values, j, axis=1)
    return Dataset(y=values[:, j], X=X if X.shape[1] > 0 else None, kind=kind)


def build_dataset(entry, seed, role='historical'):
    entry = dict(entry)
    if 'path' in entry:
        return load_csv(entry.pop('path'), **entry)
    if 'generator' not in entry:
        raise ConfigError(f'data.{role} needs either \'path\' or \'generator\'.')
    name = entry.pop('generator')
    if name not in GENERATORS:
        raise ConfigError(f'Unknown data generator \'{name}\'. Available: {sorted(GENERATORS)}')
    entry_seed = entry.pop('seed', None)
    rng = np.random.default_rng([int(seed if entry_seed is None else entry_seed), ROLE_OFFSETS[role]])
    try:
        return GENERATORS[name](rng, **entry)
    except TypeError as e:
        raise ConfigError(f'data.{role}: bad arguments for generator \'{name}\': {e}') from e


def build_datasets(data_config, seed):
    """Returns ``(historical, current)``; current is None when absent."""
    if not data_config or 'historical' not in data_config:
        raise ConfigError('Config needs a data.historical section.')
    historical = build_dataset(data_config['historical'], seed, 'historical')
    current = None
    if data_config.get('current'):
        current = build_dataset(data_config['current'], seed, 'current')
    logger.info(f'| data: historical n={historical.n}'
                + (f', current n={current.n}' if current is not None else ''))
    return historical, current


def true_parameters(entry):
    """Data-generating theta of a regression generator entry in model order, else None."""
    name = (entry or {}).get('generator')
    if name == 'linreg':
        return np.append(_coefficients(entry['beta'], entry.get('P')), float(entry['sigma2']))
    if name == 'logistic':
        return np.append(float(entry['alpha']), _coefficients(entry['beta'], entry.get('P')))
    return None
