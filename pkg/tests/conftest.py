import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from basics.base_model import Dataset, build_model  # noqa: E402
from data_gen.datasets import linreg_data, poisson_data, gaussian_data  # noqa: E402

# (y0, N0, y, N) of the four Bernoulli scenarios
BERNOULLI_SCENARIOS = {
    1: (20, 100, 20, 100),
    2: (10, 100, 200, 1000),
    3: (200, 1000, 200, 1000),
    4: (100, 1000, 200, 1000),
}
BETA = [-1.0, 1.0, 0.5, -0.5]


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def bernoulli():
    return build_model({'family': 'BetaBernoulli', 'c': 1.0, 'd': 1.0})


@pytest.fixture
def bernoulli_data():
    return Dataset.from_counts(20, 100)


@pytest.fixture
def poisson():
    return build_model({'family': 'GammaPoisson', 'alpha0': 2.0, 'beta0': 2.0})


@pytest.fixture
def poisson_data_200():
    return poisson_data(np.random.default_rng([1234, 0]), n=200, lam=2.0)


@pytest.fixture
def normal_gamma():
    return build_model({'family': 'NormalGamma', 'mu0': 0.0, 'kappa0': 5.0, 'alpha0': 1.0, 'beta0': 1.0})


@pytest.fixture
def gaussian_data_50():
    return gaussian_data(np.random.default_rng([1234, 0]), n=50, mu=-0.1, tau=1e6)


@pytest.fixture
def nig():
    return build_model({'family': 'NIGRegression', 'mu0': 0.0, 'Lambda0': 1.5, 'alpha0': 0.5, 'gamma0': 2.0})


@pytest.fixture
def linreg_data_a():
    """Scenario A: N0 = 50, P = 5."""
    return linreg_data(np.random.default_rng([1234, 0]), n=50, beta=BETA, sigma2=4.0, P=5)


@pytest.fixture
def logistic():
    return build_model({'family': 'LogisticRegression'})
