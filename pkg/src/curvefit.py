"""
    Smoothing (Z, F) into l(a0), the K-point dictionary, lookups and accuracy metrics.

    The curve is an interpolating cubic spline with one coefficient per training point and
    not-a-knot ends, so affine, quadratic and cubic targets are reproduced exactly. The
    derivative variant fits l' instead and integrates it with the midpoint rule from l(0) = 0.
"""
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from basics.errors import DictionaryRangeError, NumericalError, SupportError
from utils.io_utils import read_csv, read_json, write_csv, write_json

logger = logging.getLogger(__name__)

VARIANTS = ('direct', 'derivative_midpoint')
MRAE_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class SplineFit:
    spline: CubicSpline
    x: np.ndarray
    y: np.ndarray

    @property
    def knots(self):
        return self.spline.x

    @property
    def coefficients(self):
        return self.spline.c

    @property
    def intercept(self):
        return float(self.y[0])

    @property
    def order(self):
        return self.spline.c.shape[0] - 1

    @property
    def q(self):
        return self.x.size

    def __call__(self, a0):
        return self.spline(a0)

    def derivative(self, a0):
        return self.spline(a0, 1)


def _make_spline(x, y, what):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 4:
        raise SupportError(f'Need at least 4 points to fit the {what} curve, got {x.size}.')
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NumericalError(f'Non-finite {what} values cannot be fitted.')
    if not np.all(np.diff(x) > 0):
        raise SupportError('Grid abscissae must be strictly increasing.')
    return SplineFit(spline=CubicSpline(x, y, bc_type='not-a-knot'), x=x, y=y)


def fit_l_curve(grid) -> SplineFit:
    """Spline through the grid's (Z, F); accepts a GridResult or a ``(Z, F)`` pair."""
    if isinstance(grid, tuple):
        Z, F = grid
    else:
        Z, F = grid.Z, grid.F
    return _make_spline(Z, F, 'l')


@dataclass(frozen=True, eq=False)
class Dictionary:
    a0_grid: np.ndarray
    l_values: np.ndarray
    provenance: str = 'direct'
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        a0 = np.asarray(self.a0_grid, dtype=float)
        lv = np.asarray(self.l_values, dtype=float)
        if a0.size < 2:
            raise SupportError('A dictionary needs at least 2 points.')
        if a0.shape != lv.shape:
            raise SupportError('a0_grid and l_values must have the same length.')
        if not np.all(np.diff(a0) > 0):
            raise SupportError('Dictionary a0 values must be strictly increasing.')
        if self.provenance not in VARIANTS:
            raise SupportError(f'Unknown dictionary provenance \'{self.provenance}\'.')
        object.__setattr__(self, 'a0_grid', a0)
        object.__setattr__(self, 'l_values', lv)

    @property
    def K(self):
        return self.a0_grid.size

    @property
    def lower(self):
        return float(self.a0_grid[0])

    @property
    def upper(self):
        return float(self.a0_grid[-1])

    def covers(self, lo, hi):
        return self.lower <= lo and hi <= self.upper

    def lookup(self, a0):
        return lookup_l(self, a0)

    def to_csv(self, path, prov=None, sidecar=None):
        write_csv(path, ('a0', 'l_hat'), zip(self.a0_grid, self.l_values), prov)
        meta = dict(self.meta, variant=self.provenance, K=self.K)
        if sidecar:
            meta.update(sidecar)
        write_json(os.path.splitext(path)[0] + '.json', meta, prov)

    @classmethod
    def from_csv(cls, path):
        _, columns, rows = read_csv(path)
        if columns != ['a0', 'l_hat']:
            raise SupportError(f'{path}: expected header a0,l_hat, got {",".join(columns)}.')
        values = np.array(rows, dtype=float)
        sidecar_path = os.path.splitext(path)[0] + '.json'
        meta = read_json(sidecar_path) if os.path.exists(sidecar_path) else {}
        provenance = meta.get('variant', 'direct')
        return cls(a0_grid=values[:, 0], l_values=values[:, 1], provenance=provenance,
                   meta={k: v for k, v in meta.items() if k not in ('provenance', 'variant', 'K')})


def predict_dictionary(fit: SplineFit, K=20000, m=0.0, M=None) -> Dictionary:
    """K evenly spaced predictions of the fitted curve on [m, M] (M defaults to the last knot)."""
    if K < 2:
        raise SupportError(f'K must be at least 2, got {K}.')
    M = float(fit.x[-1]) if M is None else float(M)
    a0 = np.linspace(m, M, int(K))
    values = np.asarray(fit(a0), dtype=float)
    if a0[0] == 0.0 and np.any(fit.x == 0.0):
        values[0] = 0.0
    return Dictionary(a0_grid=a0, l_values=values, provenance='direct', meta={'J': fit.q, 'm': m, 'M': M})


def lookup_l(dictionary: Dictionary, a0):
    """Linear interpolation in the dictionary; no extrapolation."""
    a = np.asarray(a0, dtype=float)
    if np.any(a < dictionary.lower) or np.any(a > dictionary.upper) or np.any(np.isnan(a)):
        raise DictionaryRangeError(f'a0={a0} outside the dictionary range '
                                   f'[{dictionary.lower}, {dictionary.upper}].')
    out = np.interp(a, dictionary.a0_grid, dictionary.l_values)
    return float(out) if out.ndim == 0 else out


def fit_l_from_derivative(grid, K=20000, M=None) -> Dictionary:
    """
        Spline through (Z, F') without the free point, evaluated at the midpoints of a K-point
        grid on [0, M] and integrated cumulatively from l(0) = 0. Below the first grid point
        l' is extended linearly with the spline's slope there.
    """
    if isinstance(grid, tuple):
        Z, Fp = (np.asarray(v, dtype=float) for v in grid)
    else:
        Z, Fp = grid.Z, grid.Fprime
    keep = Z > 0
    Z, Fp = Z[keep], Fp[keep]
    if not np.all(np.isfinite(Fp)):
        raise SupportError(f'Derivative missing at {int(np.sum(~np.isfinite(Fp)))} grid points.')
    fit = _make_spline(Z, Fp, 'l\'')
    if K < 2:
        raise SupportError(f'K must be at least 2, got {K}.')
    M = float(Z[-1]) if M is None else float(M)
    a0 = np.linspace(0.0, M, int(K))
    mids = 0.5 * (a0[:-1] + a0[1:])
    slope = np.where(mids >= Z[0], fit(mids), fit(Z[0]) + fit.derivative(Z[0]) * (mids - Z[0]))
    l_values = np.concatenate([[0.0], np.cumsum(slope * np.diff(a0))])
    return Dictionary(a0_grid=a0, l_values=l_values, provenance='derivative_midpoint',
                      meta={'J': int(Z.size), 'm': 0.0, 'M': M})


@dataclass(frozen=True)
class CurveMetrics:
    mad: float
    rmse: float
    mrae: float

    def to_dict(self):
        return {'MAD': self.mad, 'RMSE': self.rmse, 'MRAE': self.mrae}


def _metrics(a0, est, log_c) -> CurveMetrics:
    exact = np.asarray(log_c(a0), dtype=float)
    err = est - exact
    rel = np.abs(exact) >= MRAE_FLOOR
    mrae = float(np.mean(np.abs(err[rel]) / np.abs(exact[rel]))) if np.any(rel) else 0.0
    return CurveMetrics(mad=float(np.mean(np.abs(err))), rmse=float(np.sqrt(np.mean(err ** 2))), mrae=mrae)


def curve_metrics(dictionary: Dictionary, truth, a0_range=None) -> CurveMetrics:
    """
        MAD, RMSE and MRAE of the dictionary against ``truth`` (ConjugateConstants or a
        callable a0 -> l) over dictionary points inside ``a0_range``.
    """
    log_c = truth.log_c if hasattr(truth, 'log_c') else truth
    a0, est = dictionary.a0_grid, dictionary.l_values
    if a0_range is not None:
        lo, hi = a0_range
        keep = (a0 >= lo) & (a0 <= hi)
        a0, est = a0[keep], est[keep]
    if a0.size == 0:
        raise SupportError(f'No dictionary points inside {a0_range}.')
    return _metrics(a0, est, log_c)


def grid_metrics(grid, truth) -> CurveMetrics:
    """The same metrics on the J estimated grid points, before any smoothing."""
    log_c = truth.log_c if hasattr(truth, 'log_c') else truth
    keep = np.asarray(grid.phase) != 'free'
    return _metrics(np.asarray(grid.Z)[keep], np.asarray(grid.F)[keep], log_c)
