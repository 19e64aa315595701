"""Vectorized B-spline evaluation (reference backend).

Values come from the Cox-de Boor recursion restricted to the degree+1
functions that are nonzero on the containing knot span; derivatives are
obtained by running the recursion up to a reduced degree and then
applying the knot-difference lift once per derivative order.
"""

import numpy as np


def find_spans(knots, degree, x):
    """Index of the knot span containing each x.

    Returns the largest i with knots[i] <= x, clipped to the valid range
    [degree, len(knots) - degree - 2] so that points at (or beyond) the
    domain ends are treated as belonging to the outermost interior span.
    """
    knots = np.asarray(knots, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n_basis = knots.shape[0] - degree - 1
    spans = np.searchsorted(knots, x, side="right") - 1
    return np.clip(spans, degree, n_basis - 1)


def design_matrix(knots, degree, x, deriv=0):
    """Dense matrix of B-spline basis values or derivatives.

    Parameters
    ----------
    knots : array
        Full clamped knot vector, non-decreasing.
    degree : int
        Polynomial degree of the basis.
    x : array
        Evaluation points, all inside [knots[degree], knots[-degree-1]].
    deriv : int
        Derivative order; 0 gives plain values.

    Returns
    -------
    numpy.ndarray of shape (len(x), len(knots) - degree - 1)
        Row i holds the deriv-th derivatives of every basis function at
        x[i].  At an interior knot the value from the right-hand span is
        taken; at the domain end, from the left.
    """
    knots = np.ascontiguousarray(knots, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[0]
    p = knots.shape[0] - degree - 1
    out = np.zeros((n, p))
    if deriv > degree:
        return out
    spans = find_spans(knots, degree, x)
    q = degree - deriv

    # Cox-de Boor triangle up to degree q; vals[:, r] is the value of
    # basis function span - j + r at stage j.
    vals = np.ones((n, 1))
    left = np.empty((n, q + 1))
    right = np.empty((n, q + 1))
    for j in range(1, q + 1):
        left[:, j] = x - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - x
        nxt = np.empty((n, j + 1))
        saved = np.zeros(n)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = vals[:, r] / denom
            nxt[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        nxt[:, j] = saved
        vals = nxt

    # Derivative lift: one pass per derivative order, raising the degree
    # index back up to `degree`.  Zero-width knot differences contribute
    # nothing (their basis functions vanish identically).
    for ell in range(q + 1, degree + 1):
        nxt = np.zeros((n, ell + 1))
        for r in range(ell + 1):
            acc = np.zeros(n)
            if r >= 1:
                d1 = knots[spans + r] - knots[spans + r - ell]
                np.divide(vals[:, r - 1], d1, out=acc, where=d1 > 0.0)
            if r <= ell - 1:
                d2 = knots[spans + r + 1] - knots[spans + r + 1 - ell]
                sub = np.zeros(n)
                np.divide(vals[:, r], d2, out=sub, where=d2 > 0.0)
                acc -= sub
            nxt[:, r] = ell * acc
        vals = nxt

    cols = spans[:, None] + np.arange(-degree, 1)[None, :]
    np.put_along_axis(out, cols, vals, axis=1)
    return out
