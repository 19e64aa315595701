# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled B-spline kernels.

Mirrors _bspline_py operation for operation so both backends return
bit-identical matrices.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def design_matrix(knots, int degree, x, int deriv=0):
    """Dense matrix of B-spline basis values or derivatives.

    Same contract as the pure-Python backend; see
    fcurve._core._bspline_py.design_matrix.
    """
    cdef double[::1] kv = np.ascontiguousarray(knots, dtype=np.float64)
    cdef double[::1] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t p = kv.shape[0] - degree - 1
    out_arr = np.zeros((n, p))
    cdef double[:, ::1] out = out_arr
    if deriv > degree:
        return out_arr
    cdef Py_ssize_t q = degree - deriv

    cdef double[::1] vals = np.empty(degree + 1)
    cdef double[::1] nxt = np.empty(degree + 1)
    cdef double[::1] left = np.empty(degree + 2)
    cdef double[::1] right = np.empty(degree + 2)

    cdef Py_ssize_t i, j, r, s, ell, lo, hi, mid
    cdef Py_ssize_t smax = p - 1
    cdef Py_ssize_t nknots = kv.shape[0]
    cdef double xv, saved, temp, acc, d1, d2

    with nogil:
        for i in range(n):
            xv = xs[i]
            # span search: same result as searchsorted(side="right") - 1
            lo = 0
            hi = nknots
            while lo < hi:
                mid = (lo + hi) // 2
                if kv[mid] <= xv:
                    lo = mid + 1
                else:
                    hi = mid
            s = lo - 1
            if s < degree:
                s = degree
            if s > smax:
                s = smax

            vals[0] = 1.0
            for j in range(1, q + 1):
                left[j] = xv - kv[s + 1 - j]
                right[j] = kv[s + j] - xv
                saved = 0.0
                for r in range(j):
                    temp = vals[r] / (right[r + 1] + left[j - r])
                    vals[r] = saved + right[r + 1] * temp
                    saved = left[j - r] * temp
                vals[j] = saved

            for ell in range(q + 1, degree + 1):
                for r in range(ell + 1):
                    acc = 0.0
                    if r >= 1:
                        d1 = kv[s + r] - kv[s + r - ell]
                        if d1 > 0.0:
                            acc = acc + vals[r - 1] / d1
                    if r <= ell - 1:
                        d2 = kv[s + r + 1] - kv[s + r + 1 - ell]
                        if d2 > 0.0:
                            acc = acc - vals[r] / d2
                    nxt[r] = ell * acc
                for r in range(ell + 1):
                    vals[r] = nxt[r]

            for r in range(degree + 1):
                out[i, s - degree + r] = vals[r]

    return out_arr
