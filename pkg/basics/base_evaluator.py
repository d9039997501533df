import copy
import importlib
from dataclasses import dataclass

from basics.errors import ConfigError
from utils.multiprocess_utils import chunked_multiprocess_run

EVALUATORS = {}


def register_evaluator(cls):
    EVALUATORS[cls.__name__.lower()] = cls
    EVALUATORS[cls.__name__] = cls
    if getattr(cls, 'backend', None):
        EVALUATORS[cls.backend] = cls
    return cls


def get_evaluator_cls(backend):
    if backend in EVALUATORS:
        return EVALUATORS[backend]
    if '.' not in backend:
        known = sorted({cls.backend for cls in EVALUATORS.values()})
        raise ConfigError(f'Unknown evaluator backend \'{backend}\'. Available: {known}')
    pkg = '.'.join(backend.split('.')[:-1])
    cls_name = backend.split('.')[-1]
    return getattr(importlib.import_module(pkg), cls_name)


@dataclass(frozen=True)
class EvaluationResult:
    a0: float
    l: float
    l_prime: float
    l_se: float = 0.0
    l_prime_se: float = 0.0
    diagnostics_ok: bool = True


def _evaluate_job(evaluator, a0):
    return evaluator.evaluate(a0)


class BaseEvaluator:
    '''
        Base class for a0 -> (l(a0), l'(a0)) evaluators used to build grids.
        1. *evaluate*:
            one call, one a0, one EvaluationResult with error estimates;
        2. *evaluate_many*:
            independent a0 values, optionally in worker processes.

        Subclasses should define:
        1. *backend*:
            the tag written to grid files;
        2. *evaluate*.
    '''
    backend = ''
    num_workers = 1

    def evaluate(self, a0) -> EvaluationResult:
        raise NotImplementedError

    def __call__(self, a0) -> EvaluationResult:
        return self.evaluate(a0)

    def evaluate_many(self, a0s, num_workers=None):
        num_workers = self.num_workers if num_workers is None else num_workers
        a0s = [float(a) for a in a0s]
        if num_workers <= 1 or len(a0s) <= 1:
            return [self.evaluate(a) for a in a0s]
        # worker processes are daemonic and may not fork again
        inner = copy.copy(self)
        inner.num_workers = 1
        return list(chunked_multiprocess_run(_evaluate_job, [(inner, a) for a in a0s], num_workers=num_workers))
