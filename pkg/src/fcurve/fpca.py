"""Functional principal component analysis.

Works directly on basis coefficients: with inner-product matrix W and
centered coefficient rows G, the covariance eigenproblem is solved for
the symmetric matrix

    (1 / (n - 1)) * W^(1/2) G' G W^(1/2),

whose eigenvectors u pull back to component coefficient vectors
phi = W^(-1/2) u.  The components are orthonormal in the function-space
inner product and scores are the projections of the centered curves on
them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .smooth import FunctionalDataset

#: Sign rule cutoff: integrals smaller than this count as zero.
_SIGN_TOL = 1e-12


@dataclass(frozen=True)
class FpcaResult:
    """Fitted decomposition of a functional dataset.

    Attributes
    ----------
    basis : BSplineBasis
    mean_coefficients : (p,) array of the pointwise mean curve.
    eigenvalues : (p,) non-increasing, non-negative component variances.
    components : (p, p) array; column l holds the coefficients of the
        l-th principal component function, unit-norm and mutually
        orthogonal under the basis inner product.
    scores : (n, p) array of centered-curve projections; column l has
        zero mean and variance eigenvalues[l].
    variance_ratio : (p,) share of total variance per component.
    """

    basis: object
    mean_coefficients: np.ndarray
    eigenvalues: np.ndarray
    components: np.ndarray
    scores: np.ndarray
    variance_ratio: np.ndarray

    @property
    def n_curves(self):
        return self.scores.shape[0]

    @property
    def dimension(self):
        return self.mean_coefficients.shape[0]

    def truncated_scores(self, n_components):
        """Score matrix cut to the first `n_components` columns."""
        q = int(n_components)
        if not 1 <= q <= self.dimension:
            raise ConfigError(
                f"n_components must be in 1..{self.dimension}, got {n_components}")
        return self.scores[:, :q].copy()

    def reconstruct(self, score_row, n_components):
        """Coefficients of the curve rebuilt from leading scores.

        `score_row` holds the first `n_components` scores of one curve;
        the result is the mean plus the scored components.
        """
        q = int(n_components)
        if not 0 <= q <= self.dimension:
            raise ConfigError(
                f"n_components must be in 0..{self.dimension}, got {n_components}")
        score_row = np.asarray(score_row, dtype=np.float64)
        if score_row.shape != (q,):
            raise ConfigError(f"expected {q} scores, got shape {score_row.shape}")
        return self.mean_coefficients + self.components[:, :q] @ score_row

    def harmonic_effect(self, component, multiple=2.0):
        """Mean curve perturbed along one component.

        Returns coefficient vectors ``(plus, minus)`` for the mean plus
        and minus `multiple` standard deviations of the 1-based
        `component`.
        """
        l = int(component)
        if not 1 <= l <= self.dimension:
            raise ConfigError(
                f"component must be in 1..{self.dimension}, got {component}")
        step = float(multiple) * np.sqrt(max(self.eigenvalues[l - 1], 0.0)) \
            * self.components[:, l - 1]
        return self.mean_coefficients + step, self.mean_coefficients - step


def fit_fpca(dataset):
    """Decompose a FunctionalDataset into principal components.

    Requires at least two curves.  Component signs are fixed by making
    each component integrate to a positive value over the age range; a
    component with (numerically) zero integral is made positive at the
    age grid point where it is largest in absolute value.
    """
    if not isinstance(dataset, FunctionalDataset):
        raise ConfigError("fit_fpca expects a FunctionalDataset")
    n = len(dataset)
    if n < 2:
        raise DataError("need at least 2 curves to estimate components")

    basis = dataset.basis
    half, inv_half = basis.gram_factors
    mean = dataset.coefficients.mean(axis=0)
    centered = dataset.coefficients - mean

    work = centered @ half
    cov = work.T @ work / (n - 1)
    cov = (cov + cov.T) / 2.0
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]

    components = inv_half @ evecs
    scores = work @ evecs

    # Deterministic sign convention.
    weights = basis.gram @ np.ones(basis.dimension)  # integral of each basis fn
    integrals = components.T @ weights
    grid = None
    for l in range(components.shape[1]):
        flip = False
        if integrals[l] < -_SIGN_TOL:
            flip = True
        elif abs(integrals[l]) <= _SIGN_TOL:
            if grid is None:
                lo, hi = basis.domain
                grid = np.linspace(lo, hi, 1001)
                design = basis.design(grid)
            values = design @ components[:, l]
            peak = int(np.argmax(np.abs(values)))
            flip = values[peak] < 0.0
        if flip:
            components[:, l] = -components[:, l]
            scores[:, l] = -scores[:, l]

    total = evals.sum()
    ratio = evals / total if total > 0.0 else np.zeros_like(evals)
    return FpcaResult(basis, mean, evals, components, scores, ratio)
