"""Penalized least-squares smoothing of sampled curves.

A curve observed at N ages is represented by basis coefficients that
minimize

    sum_i (y_i - x(t_i))^2 + lam * integral of x''(t)^2,

solved through the normal equations (B'B + lam*R) c = B'y, where B is
the basis design matrix and R the curvature penalty.  The penalty
weight is chosen per curve (or jointly for a whole panel) by
generalized cross-validation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import __version__
from .basis import BSplineBasis
from .errors import ConfigError, DataError, NumericError
from .ingest import CurveKey, Sex

#: (start exponent, stop exponent, count) of the standard search grid.
DEFAULT_GRID_SPEC = (-6.0, 2.0, 33)


def default_lambda_grid():
    """Logarithmically spaced penalty weights, 1e-6 to 1e2, 33 points."""
    lo, hi, count = DEFAULT_GRID_SPEC
    return np.logspace(lo, hi, count)


@dataclass(frozen=True)
class SmoothFit:
    """One penalized fit of a single curve.

    Attributes
    ----------
    coefficients : numpy.ndarray
        Basis coefficients of the fitted curve.
    lam : float
        Penalty weight used.
    df : float
        Effective degrees of freedom, the trace of the hat matrix.
    sse : float
        Residual sum of squares at the observation points.
    gcv : float
        Generalized cross-validation score; infinity when df >= N
        (an interpolating fit leaves nothing to cross-validate).
    """

    coefficients: np.ndarray
    lam: float
    df: float
    sse: float
    gcv: float


def _gcv_value(sse, df, n_obs):
    denom = n_obs - df
    if denom <= 0.0:
        return np.inf
    return n_obs * sse / denom ** 2


def gcv_score(fit, n_obs):
    """Generalized cross-validation score of a fit on N observations.

    GCV = N * SSE / (N - df)^2.  Raises NumericError when df >= N.
    """
    n_obs = int(n_obs)
    if fit.df >= n_obs:
        raise NumericError(
            f"GCV undefined: effective df {fit.df:.6g} >= {n_obs} observations")
    return _gcv_value(fit.sse, fit.df, n_obs)


def fit_penalized(values, ages, basis, lam):
    """Fit one curve by penalized least squares.

    Parameters
    ----------
    values, ages : arrays of equal length N >= basis.order
    basis : BSplineBasis
    lam : float
        Non-negative penalty weight.

    Returns
    -------
    SmoothFit
    """
    values = np.asarray(values, dtype=np.float64)
    ages = np.asarray(ages, dtype=np.float64)
    if values.ndim != 1 or ages.ndim != 1 or values.shape != ages.shape:
        raise ConfigError("values and ages must be equal-length vectors")
    if values.shape[0] < basis.order:
        raise ConfigError(
            f"need at least {basis.order} observations, got {values.shape[0]}")
    if not np.all(np.isfinite(values)):
        raise DataError("curve values must be finite")
    if not (np.isfinite(lam) and lam >= 0.0):
        raise ConfigError("the penalty weight must be finite and >= 0")

    B = basis.design(ages)
    BtB = B.T @ B
    coeffs, df = _solve_one(BtB, B.T @ values, basis.penalty, lam)
    resid = values - B @ coeffs
    sse = float(resid @ resid)
    return SmoothFit(coeffs, float(lam), df, sse,
                     _gcv_value(sse, df, values.shape[0]))


def _solve_one(BtB, Bty, penalty, lam):
    A = BtB + lam * penalty
    try:
        factor = cho_factor(A)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"normal equations not positive definite at lam={lam:g}: {exc}"
        ) from None
    coeffs = cho_solve(factor, Bty)
    df = float(np.trace(cho_solve(factor, BtB)))
    return coeffs, df


def select_lambda(values, ages, basis, grid=None):
    """Pick the penalty weight minimizing GCV over a grid.

    Ties (equal scores) go to the larger weight, preferring the smoother
    fit.  Returns ``(best_lam, fits)`` with one SmoothFit per grid point
    in grid order.  All-infinite scores raise NumericError.
    """
    grid = default_lambda_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise ConfigError("the penalty grid must be a non-empty vector")
    fits = [fit_penalized(values, ages, basis, lam) for lam in grid]
    best = None
    for fit in fits:
        if not np.isfinite(fit.gcv):
            continue
        if best is None or fit.gcv < best.gcv or (
                fit.gcv == best.gcv and fit.lam > best.lam):
            best = fit
    if best is None:
        raise NumericError("GCV is undefined on the whole grid (df >= N everywhere)")
    return best.lam, fits


class FunctionalDataset:
    """Curves represented by rows of basis coefficients.

    Attributes
    ----------
    basis : BSplineBasis
    coefficients : (n, p) array, one curve per row.
    keys : tuple of CurveKey, unique, aligned with the rows.
    lambdas : (n,) array of the penalty weights each fit used.
    ages : grid of observation ages the fits were computed on.
    """

    def __init__(self, basis, coefficients, keys, lambdas, ages):
        coefficients = np.asarray(coefficients, dtype=np.float64)
        lambdas = np.asarray(lambdas, dtype=np.float64)
        ages = np.asarray(ages, dtype=np.float64)
        keys = tuple(CurveKey(k[0], int(k[1]), Sex.parse(k[2])) for k in keys)
        if coefficients.ndim != 2:
            raise ConfigError("coefficients must be two-dimensional")
        n, p = coefficients.shape
        if n == 0:
            raise ConfigError("a dataset needs at least one curve")
        if p != basis.dimension:
            raise ConfigError(
                f"coefficient columns ({p}) must match the basis "
                f"dimension ({basis.dimension})")
        if len(keys) != n or lambdas.shape != (n,):
            raise ConfigError("keys and lambdas must align with coefficient rows")
        if len(set(keys)) != n:
            raise ConfigError("dataset keys must be unique")
        if not np.all(np.isfinite(coefficients)):
            raise DataError("coefficients must be finite")
        self.basis = basis
        self.coefficients = coefficients
        self.keys = keys
        self.lambdas = lambdas
        self.ages = ages

    def __len__(self):
        return self.coefficients.shape[0]

    @property
    def dimension(self):
        return self.coefficients.shape[1]

    @property
    def sexes(self):
        out = []
        for key in self.keys:
            if key.sex not in out:
                out.append(key.sex)
        return tuple(sorted(out, key=lambda s: s.value))

    def evaluate(self, index, ts, deriv=0):
        """Values of curve `index` on a grid."""
        return self.basis.curve_values(self.coefficients[index], ts, deriv=deriv)

    def subset(self, indices):
        """Dataset restricted to the given row indices (in that order)."""
        indices = np.asarray(indices)
        if indices.dtype == bool:
            indices = np.flatnonzero(indices)
        if indices.size == 0:
            raise ConfigError("subset selects no curves")
        return FunctionalDataset(
            self.basis,
            self.coefficients[indices],
            tuple(self.keys[int(i)] for i in indices),
            self.lambdas[indices],
            self.ages,
        )

    def split_by_sex(self):
        """Mapping Sex -> dataset holding only that sex's curves."""
        out = {}
        for sex in self.sexes:
            idx = [i for i, key in enumerate(self.keys) if key.sex is sex]
            out[sex] = self.subset(np.asarray(idx))
        return out

    def save(self, path):
        """Serialize to a single binary file (portable npz layout)."""
        meta = {
            "version": __version__,
            "basis": self.basis.to_config(),
            "keys": [[k.country, k.year, k.sex.value] for k in self.keys],
        }
        with open(path, "wb") as fh:
            np.savez(fh,
                     coefficients=self.coefficients,
                     lambdas=self.lambdas,
                     ages=self.ages,
                     meta=np.asarray(json.dumps(meta, sort_keys=True)))

    @classmethod
    def load(cls, path):
        """Inverse of `save`."""
        try:
            with np.load(path, allow_pickle=False) as data:
                meta = json.loads(str(data["meta"][()]))
                basis = BSplineBasis.from_config(meta["basis"])
                return cls(basis, data["coefficients"], meta["keys"],
                           data["lambdas"], data["ages"])
        except (OSError, KeyError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise DataError(f"cannot read dataset {path}: {exc}") from None


def smooth_panel(panel, basis, mode="per_curve", grid=None):
    """Smooth every curve of a panel into a FunctionalDataset.

    Parameters
    ----------
    panel : CurvePanel
    basis : BSplineBasis
    mode : str
        "per_curve" picks the GCV-minimizing penalty weight separately
        for each curve; "common" minimizes the sum of the per-curve GCV
        scores over the grid and applies one shared weight.
    grid : array, optional
        Penalty-weight search grid; defaults to `default_lambda_grid`.

    Returns
    -------
    FunctionalDataset
        Rows aligned with `panel.curves`.
    """
    if mode not in ("per_curve", "common"):
        raise ConfigError(f"unknown smoothing mode {mode!r}")
    grid = default_lambda_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size == 0:
        raise ConfigError("the penalty grid must be a non-empty vector")

    ages = panel.curves[0].ages
    n_obs = ages.shape[0]
    Y = panel.values_matrix()
    B = basis.design(ages)
    BtY = B.T @ Y.T
    BtB = B.T @ B

    n_curves = len(panel)
    scores = np.empty((grid.size, n_curves))
    coeff_by_lam = np.empty((grid.size, n_curves, basis.dimension))
    for g, lam in enumerate(grid):
        A = BtB + lam * basis.penalty
        try:
            factor = cho_factor(A)
        except np.linalg.LinAlgError as exc:
            raise NumericError(
                f"normal equations not positive definite at lam={lam:g}: {exc}"
            ) from None
        gammas = cho_solve(factor, BtY)
        df = float(np.trace(cho_solve(factor, BtB)))
        fitted = B @ gammas
        sse = ((Y.T - fitted) ** 2).sum(axis=0)
        coeff_by_lam[g] = gammas.T
        scores[g] = [_gcv_value(s, df, n_obs) for s in sse]

    if mode == "per_curve":
        picks = _argmin_prefer_larger(scores, grid, axis=0)
    else:
        totals = scores.sum(axis=1)
        shared = _argmin_prefer_larger(totals[:, None], grid, axis=0)[0]
        picks = np.full(n_curves, shared)

    coefficients = coeff_by_lam[picks, np.arange(n_curves)]
    lambdas = grid[picks]
    return FunctionalDataset(basis, coefficients, panel.keys, lambdas, ages)


def _argmin_prefer_larger(scores, grid, axis=0):
    """Column-wise argmin over grid scores, breaking ties to larger lam.

    Infinite scores never win unless the entire column is infinite, in
    which case a NumericError is raised.
    """
    if np.isinf(scores).all(axis=axis).any():
        raise NumericError("GCV is undefined on the whole grid (df >= N everywhere)")
    order = np.argsort(grid)[::-1]  # larger lam first, so argmin keeps it on ties
    best_rows = order[np.argmin(scores[order], axis=axis)]
    return best_rows
