"""Cubic B-spline bases over an age range.

A basis is defined by a breakpoint sequence (the interior knots, ends
included) and a spline order.  The clamped knot vector repeats each end
breakpoint ``order`` times in total, which makes the basis dimension

    p = len(breakpoints) + order - 2.

Inner-product and curvature-penalty matrices are assembled by
Gauss-Legendre quadrature on each knot interval with ``order + 1``
nodes, which integrates the piecewise-polynomial integrands exactly up
to rounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._core import design_matrix
from .errors import ConfigError

#: Age domain shared by the standard knot layouts.
AGE_RANGE = (0.0, 110.0)


def _as_float_tuple(values):
    out = tuple(float(v) for v in values)
    if any(not np.isfinite(v) for v in out):
        raise ConfigError("knots must be finite")
    return out


@dataclass(frozen=True)
class KnotScheme:
    """Breakpoint layout for a basis.

    Attributes
    ----------
    name : str
        "uniform111", "nonuniform31", or "custom".
    knots : tuple of float
        Non-decreasing breakpoints, first strictly below last.
    """

    name: str
    knots: tuple

    def __post_init__(self):
        knots = _as_float_tuple(self.knots)
        object.__setattr__(self, "knots", knots)
        if len(knots) < 2:
            raise ConfigError("a knot scheme needs at least 2 breakpoints")
        if any(b < a for a, b in zip(knots, knots[1:])):
            raise ConfigError("breakpoints must be non-decreasing")
        if knots[0] >= knots[-1]:
            raise ConfigError("the knot range must have positive length")

    @classmethod
    def uniform111(cls):
        """111 equally spaced breakpoints on [0, 110], one per year of age."""
        return cls("uniform111", np.linspace(*AGE_RANGE, 111))

    @classmethod
    def nonuniform31(cls):
        """31 breakpoints, dense over infancy and sparse afterwards.

        Quarter-year steps on [0, 2] track the infant mortality spike,
        five-year steps span [7, 107], and the final breakpoint closes
        the range at 110.
        """
        head = np.arange(0.0, 2.01, 0.25)
        mid = np.arange(7.0, 107.01, 5.0)
        return cls("nonuniform31", np.concatenate([head, mid, [110.0]]))

    @classmethod
    def custom(cls, knots):
        """Scheme from an explicit breakpoint sequence."""
        return cls("custom", knots)

    @classmethod
    def by_name(cls, name):
        """Look up one of the two named layouts."""
        if name == "uniform111":
            return cls.uniform111()
        if name == "nonuniform31":
            return cls.nonuniform31()
        raise ConfigError(f"unknown knot scheme {name!r}")


class BSplineBasis:
    """Clamped B-spline basis over a breakpoint sequence.

    Parameters
    ----------
    scheme : KnotScheme
        Breakpoints; repeated interior breakpoints are accepted but the
        standard layouts use simple knots.
    order : int
        Spline order (polynomial degree + 1), at least 2.  Order 4 gives
        the usual cubic splines.
    """

    def __init__(self, scheme, order=4):
        if not isinstance(scheme, KnotScheme):
            scheme = KnotScheme.custom(scheme)
        if int(order) != order or order < 2:
            raise ConfigError("order must be an integer >= 2")
        self.scheme = scheme
        self.order = int(order)
        self.degree = self.order - 1
        knots = np.asarray(scheme.knots, dtype=np.float64)
        self.breakpoints = knots
        self.knot_vector = np.concatenate([
            np.full(self.order - 1, knots[0]),
            knots,
            np.full(self.order - 1, knots[-1]),
        ])
        self.dimension = len(knots) + self.order - 2
        self.domain = (float(knots[0]), float(knots[-1]))

    def __repr__(self):
        return (f"BSplineBasis(scheme={self.scheme.name!r}, order={self.order}, "
                f"dimension={self.dimension})")

    def __eq__(self, other):
        if not isinstance(other, BSplineBasis):
            return NotImplemented
        return self.order == other.order and np.array_equal(
            self.breakpoints, other.breakpoints)

    def _check_points(self, ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
        if ts.ndim != 1:
            raise ConfigError("evaluation points must be one-dimensional")
        if ts.size and (not np.all(np.isfinite(ts))):
            raise ConfigError("evaluation points must be finite")
        lo, hi = self.domain
        if ts.size and (ts.min() < lo or ts.max() > hi):
            raise ConfigError(
                f"evaluation points must lie in [{lo:g}, {hi:g}]")
        return ts

    def design(self, ts, deriv=0):
        """Matrix of basis values (or derivatives) at the given points.

        Returns an array of shape ``(len(ts), dimension)``.  ``deriv``
        must be at most ``order - 1``; at interior knots the value from
        the right-hand span is used, at the upper domain end the one
        from the left.
        """
        ts = self._check_points(ts)
        if int(deriv) != deriv or deriv < 0 or deriv > self.order - 1:
            raise ConfigError("deriv must be an integer in [0, order - 1]")
        return design_matrix(self.knot_vector, self.degree, ts, int(deriv))

    def evaluate(self, t, deriv=0):
        """Basis values at a single point, as a flat length-p array."""
        return self.design([t], deriv=deriv)[0]

    def curve_values(self, coefficients, ts, deriv=0):
        """Evaluate one curve (1-d coefficients) or several (2-d, one row
        per curve) on a grid of points."""
        coefficients = np.asarray(coefficients, dtype=np.float64)
        D = self.design(ts, deriv=deriv)
        if coefficients.ndim == 1:
            if coefficients.shape[0] != self.dimension:
                raise ConfigError("coefficient length must equal the basis dimension")
            return D @ coefficients
        if coefficients.ndim == 2:
            if coefficients.shape[1] != self.dimension:
                raise ConfigError("coefficient rows must equal the basis dimension")
            return coefficients @ D.T
        raise ConfigError("coefficients must be a vector or a matrix")

    @cached_property
    def _quadrature(self):
        # order+1 Gauss-Legendre nodes per distinct knot interval: exact
        # for products of two basis functions (degree <= 2*(order-1)).
        breaks = np.unique(self.breakpoints)
        nodes, weights = np.polynomial.legendre.leggauss(self.order + 1)
        mids = (breaks[1:] + breaks[:-1]) / 2.0
        half = (breaks[1:] - breaks[:-1]) / 2.0
        xq = (mids[:, None] + half[:, None] * nodes[None, :]).ravel()
        wq = (half[:, None] * weights[None, :]).ravel()
        return xq, wq

    def _moment_matrix(self, deriv):
        xq, wq = self._quadrature
        D = self.design(xq, deriv=deriv)
        M = D.T @ (wq[:, None] * D)
        return (M + M.T) / 2.0

    @cached_property
    def gram(self):
        """Matrix of pairwise basis inner products over the domain."""
        return self._moment_matrix(0)

    @cached_property
    def penalty(self):
        """Curvature penalty matrix: inner products of second derivatives.

        Requires order >= 3 so that second derivatives exist.
        """
        if self.order < 3:
            raise ConfigError("the curvature penalty needs order >= 3")
        return self._moment_matrix(2)

    @cached_property
    def gram_factors(self):
        """Symmetric square root of the inner-product matrix and its inverse.

        Returns ``(half, inv_half)`` with ``half @ half == gram``.  Used
        to move between coefficient space and an orthonormal working
        space where Euclidean geometry matches the function-space one.
        """
        evals, evecs = np.linalg.eigh(self.gram)
        if evals.min() <= 0.0:
            from .errors import NumericError

            raise NumericError("inner-product matrix is not positive definite")
        root = np.sqrt(evals)
        half = (evecs * root) @ evecs.T
        inv_half = (evecs / root) @ evecs.T
        return half, inv_half

    def inner(self, a, b):
        """Inner product of two curves given by coefficient vectors."""
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        return float(a @ self.gram @ b)

    def norm(self, a):
        """Norm of a curve given by a coefficient vector."""
        return float(np.sqrt(max(self.inner(a, a), 0.0)))

    def to_config(self):
        """JSON-serializable description of this basis."""
        return {
            "scheme": self.scheme.name,
            "order": self.order,
            "knots": [float(k) for k in self.scheme.knots],
        }

    @classmethod
    def from_config(cls, config):
        """Rebuild a basis from `to_config` output."""
        try:
            name = config["scheme"]
            order = config["order"]
            knots = config["knots"]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid basis config: missing {exc}") from None
        scheme = (KnotScheme.custom(knots) if name == "custom"
                  else KnotScheme.by_name(name))
        basis = cls(scheme, order=order)
        if not np.allclose(basis.breakpoints, np.asarray(knots, dtype=np.float64),
                           rtol=0.0, atol=1e-12):
            raise ConfigError("basis config knots do not match the named scheme")
        return basis

    def save_config(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_config(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_config(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_config(json.load(fh))
