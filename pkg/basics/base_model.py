import importlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit, gammaln

from basics.errors import ConfigError, SupportError, UnsupportedError

MODELS = {}

DATA_KINDS = ('binary', 'count', 'real')
CONSTRAINTS = ('real', 'positive', 'unit')


def register_model(cls):
    MODELS[cls.__name__.lower()] = cls
    MODELS[cls.__name__] = cls
    return cls


def get_model_cls(family):
    if family in MODELS:
        return MODELS[family]
    if '.' not in family:
        known = sorted(k for k in MODELS if k != k.lower())
        raise ConfigError(f'Unknown model family \'{family}\'. Registered families: {known}')
    pkg = '.'.join(family.split('.')[:-1])
    cls_name = family.split('.')[-1]
    return getattr(importlib.import_module(pkg), cls_name)


def build_model(model_config: dict):
    """Instantiate a model family from a config section, e.g. ``{'family': 'BetaBernoulli', 'c': 1, 'd': 1}``."""
    import src.models  # noqa: F401  (registers the built-in families)
    model_config = dict(model_config)
    if 'family' not in model_config:
        raise ConfigError('Model config requires a \'family\' entry.')
    cls = get_model_cls(model_config.pop('family'))
    try:
        return cls(**model_config)
    except TypeError as e:
        raise ConfigError(f'Bad hyperparameters for {cls.__name__}: {e}') from e


def _readonly(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """
        Historical (D0) or current (D) observations, optionally with a covariate matrix.
        Sufficient statistics are computed once here; every closed form reads them
        instead of the raw vectors.
    """
    y: np.ndarray
    X: Optional[np.ndarray] = None
    kind: str = 'real'

    n: int = field(init=False)
    sum_y: float = field(init=False, repr=False)
    mean_y: float = field(init=False, repr=False)
    ss: float = field(init=False, repr=False)
    yty: float = field(init=False, repr=False)
    sum_log_factorial: float = field(init=False, repr=False)
    XtX: Optional[np.ndarray] = field(init=False, repr=False)
    Xty: Optional[np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in DATA_KINDS:
            raise SupportError(f'Dataset kind must be one of {DATA_KINDS}, got \'{self.kind}\'.')
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1:
            raise SupportError(f'Observations must be a vector, got shape {y.shape}.')
        if y.size < 1:
            raise SupportError('A dataset needs at least one observation.')
        if not np.all(np.isfinite(y)):
            raise SupportError('Observations must be finite.')
        if self.kind == 'binary' and not np.all((y == 0) | (y == 1)):
            raise SupportError('Binary observations must be 0 or 1.')
        if self.kind == 'count' and not (np.all(y >= 0) and np.all(y == np.round(y))):
            raise SupportError('Count observations must be non-negative integers.')
        object.__setattr__(self, 'y', _readonly(y))
        object.__setattr__(self, 'n', int(y.size))
        object.__setattr__(self, 'sum_y', float(y.sum()))
        object.__setattr__(self, 'mean_y', float(y.mean()))
        object.__setattr__(self, 'ss', float(np.sum((y - y.mean()) ** 2)))
        object.__setattr__(self, 'yty', float(y @ y))
        object.__setattr__(self, 'sum_log_factorial',
                           float(gammaln(y + 1).sum()) if self.kind == 'count' else 0.0)

        if self.X is None:
            object.__setattr__(self, 'XtX', None)
            object.__setattr__(self, 'Xty', None)
            return
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] != y.size:
            raise SupportError(f'Covariate matrix must have {y.size} rows, got shape {X.shape}.')
        if not np.all(np.isfinite(X)):
            raise SupportError('Covariates must be finite.')
        if X.shape[1] > 0 and np.linalg.matrix_rank(X) < X.shape[1]:
            raise SupportError(f'Covariate matrix ({X.shape[0]}x{X.shape[1]}) is not of full column rank.')
        object.__setattr__(self, 'X', _readonly(X))
        object.__setattr__(self, 'XtX', _readonly(X.T @ X))
        object.__setattr__(self, 'Xty', _readonly(X.T @ y))

    @classmethod
    def from_counts(cls, successes, n):
        """Binary dataset with ``successes`` ones out of ``n`` trials."""
        successes, n = int(successes), int(n)
        if not 0 <= successes <= n:
            raise SupportError(f'Need 0 <= successes <= n, got {successes} of {n}.')
        y = np.zeros(n)
        y[:successes] = 1.0
        return cls(y=y, kind='binary')

    @property
    def observations(self):
        return self.y

    @property
    def P(self):
        return 0 if self.X is None else self.X.shape[1]


@dataclass(frozen=True, eq=False)
class ThetaPoint:
    values: np.ndarray
    space: str = 'constrained'

    def __post_init__(self):
        if self.space not in ('constrained', 'unconstrained'):
            raise SupportError(f'Unknown parameter space \'{self.space}\'.')
        object.__setattr__(self, 'values', _readonly(np.atleast_1d(self.values)))

    @property
    def q(self):
        return self.values.shape[-1]


def _theta_values(theta, space='constrained'):
    if isinstance(theta, ThetaPoint):
        if theta.space != space:
            raise SupportError(f'Expected a point in the {space} space, got {theta.space}.')
        return np.asarray(theta.values)
    return np.atleast_1d(np.asarray(theta, dtype=float))


class BaseModel:
    '''
        Base class for model families (the ModelSpec of the power prior).
        1. *log_likelihood* and *log_prior*:
            vectorised over leading axes of theta, shape [..., q];
        2. *to_unconstrained* and *from_unconstrained*:
            coordinate-wise logit/log/identity maps with the log-Jacobian of the inverse;
        3. *initial_unconstrained*:
            a starting point for optimisers and samplers.

        Subclasses should define:
        1. *constraints*:
            one of 'real', 'positive', 'unit' per coordinate;
        2. *log_likelihood*, *log_prior*, *param_names*;
        3. for conjugate families: *log_c*, *log_c_prime*, *sample_conditional*, *log_marginal_a0*.
    '''
    data_kind = 'real'
    requires_covariates = False
    is_conjugate = False
    # Discrete likelihoods give a decreasing c(a0); the grid builder skips bisection for them.
    is_monotone = False

    @property
    def family(self):
        return type(self).__name__

    def hyperparameters(self):
        raise NotImplementedError

    def dim(self, data: Dataset):
        raise NotImplementedError

    def param_names(self, data: Dataset):
        raise NotImplementedError

    def constraints(self, q):
        raise NotImplementedError

    def check_data(self, data: Dataset):
        if data.kind != self.data_kind:
            raise SupportError(f'{self.family} expects {self.data_kind} observations, got {data.kind}.')
        if self.requires_covariates and data.X is None:
            raise SupportError(f'{self.family} requires a covariate matrix.')

    def check_theta(self, theta, data: Dataset = None):
        theta = np.asarray(theta)
        if data is not None and theta.shape[-1] != self.dim(data):
            raise SupportError(f'{self.family} expects theta of dimension {self.dim(data)}, got {theta.shape[-1]}.')
        if not np.all(self.in_support(theta)):
            raise SupportError(f'theta outside the support of {self.family}.')

    def in_support(self, theta):
        theta = np.asarray(theta)
        kinds = self.constraints(theta.shape[-1])
        ok = np.all(np.isfinite(theta), axis=-1)
        for i, kind in enumerate(kinds):
            if kind == 'positive':
                ok = ok & (theta[..., i] > 0)
            elif kind == 'unit':
                ok = ok & (theta[..., i] > 0) & (theta[..., i] < 1)
        return ok

    def log_likelihood(self, data: Dataset, theta):
        raise NotImplementedError

    def log_prior(self, theta):
        raise NotImplementedError

    def to_unconstrained(self, theta):
        theta = np.asarray(theta, dtype=float)
        if not np.all(self.in_support(theta)):
            raise SupportError(f'Cannot transform a boundary or out-of-support point of {self.family}.')
        u = theta.copy()
        for i, kind in enumerate(self.constraints(theta.shape[-1])):
            if kind == 'positive':
                u[..., i] = np.log(theta[..., i])
            elif kind == 'unit':
                u[..., i] = np.log(theta[..., i]) - np.log1p(-theta[..., i])
        return u

    def from_unconstrained(self, u):
        """Map back to the constrained space; returns ``(theta, log|dtheta/du|)``."""
        u = np.asarray(u, dtype=float)
        theta = u.copy()
        log_jac = np.zeros(u.shape[:-1])
        for i, kind in enumerate(self.constraints(u.shape[-1])):
            if kind == 'positive':
                # overflows to inf in the far tails of the quadrature
                with np.errstate(over='ignore'):
                    theta[..., i] = np.exp(u[..., i])
                log_jac = log_jac + u[..., i]
            elif kind == 'unit':
                theta[..., i] = expit(u[..., i])
                log_jac = log_jac - np.logaddexp(0.0, -u[..., i]) - np.logaddexp(0.0, u[..., i])
        return theta, log_jac

    def initial_unconstrained(self, data: Dataset):
        return np.zeros(self.dim(data))

    # conjugate hooks
    def log_c(self, data: Dataset, a0):
        raise UnsupportedError(f'{self.family} has no closed-form normalising constant; use the bridge+mcmc backend.')

    def log_c_prime(self, data: Dataset, a0):
        raise UnsupportedError(f'{self.family} has no closed-form normalising constant; use the bridge+mcmc backend.')

    def sample_conditional(self, historical: Dataset, a0, current: Optional[Dataset], rng, n):
        raise UnsupportedError(f'Exact sampling is not available for {self.family}; use the mcmc module.')

    def log_marginal_a0(self, historical: Dataset, current: Optional[Dataset], a0, prior_A):
        raise UnsupportedError(f'{self.family} has no closed-form marginal posterior of a0.')


ModelSpec = BaseModel


@dataclass(frozen=True, eq=False)
class PowerPriorTarget:
    """
        The power prior kernel L(D0|theta)^a0 pi(theta), times L(D|theta) when current data is given.
    """
    model: BaseModel
    historical: Dataset
    a0: float
    current: Optional[Dataset] = None

    def __post_init__(self):
        a0 = float(self.a0)
        if not np.isfinite(a0) or a0 < 0:
            raise SupportError(f'a0 must be a non-negative real, got {self.a0}.')
        object.__setattr__(self, 'a0', a0)
        self.model.check_data(self.historical)
        if self.current is not None:
            self.model.check_data(self.current)
            if self.current.P != self.historical.P:
                raise SupportError('Historical and current covariate matrices must have the same columns.')

    @property
    def q(self):
        return self.model.dim(self.historical)

    def with_a0(self, a0):
        return PowerPriorTarget(self.model, self.historical, a0, self.current)

    def log_historical_likelihood(self, theta):
        return self.model.log_likelihood(self.historical, theta)

    def log_density(self, theta, ll0=None):
        """Unnormalised log density at constrained ``theta`` ([..., q])."""
        lp = self.model.log_prior(theta)
        if self.a0 != 0.0:
            if ll0 is None:
                ll0 = self.model.log_likelihood(self.historical, theta)
            lp = lp + self.a0 * ll0
        if self.current is not None:
            lp = lp + self.model.log_likelihood(self.current, theta)
        return lp

    def log_density_unconstrained(self, u):
        theta, log_jac = self.model.from_unconstrained(u)
        with np.errstate(invalid='ignore', divide='ignore', over='ignore'):
            lp = self.log_density(theta) + log_jac
        return np.where(np.isnan(lp), -np.inf, lp)


def log_likelihood(model: BaseModel, data: Dataset, theta):
    model.check_data(data)
    values = _theta_values(theta)
    model.check_theta(values, data)
    return model.log_likelihood(data, values)


def log_initial_prior(model: BaseModel, theta):
    values = _theta_values(theta)
    model.check_theta(values)
    return model.log_prior(values)


def log_power_density(target: PowerPriorTarget, theta):
    values = _theta_values(theta)
    target.model.check_theta(values, target.historical)
    return target.log_density(values)


def transform_to_unconstrained(model: BaseModel, theta):
    """Returns the unconstrained point and log|dtheta/du| evaluated there."""
    values = _theta_values(theta)
    u = model.to_unconstrained(values)
    _, log_jac = model.from_unconstrained(u)
    return ThetaPoint(u, space='unconstrained'), log_jac


def transform_to_constrained(model: BaseModel, u):
    values = _theta_values(u, space='unconstrained')
    theta, log_jac = model.from_unconstrained(values)
    return ThetaPoint(theta), log_jac
