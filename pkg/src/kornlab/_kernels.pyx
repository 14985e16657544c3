# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see kornlab.kernels for the dispatching wrapper."""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow, sqrt

cnp.import_array()


def smoothed_power(const double[:, ::1] y, const double[::1] w, double p, double eps):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1], r, k
    cdef double s, base, total = 0.0, e = 0.5 * p - 1.0, eps2 = eps * eps
    cdef int fast
    coef_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] coef = coef_arr
    # closed forms for p = 1, 1.5, 2, 3, 4 avoid the general pow call
    if e == -0.5:
        fast = 1
    elif e == -0.25:
        fast = 2
    elif e == 0.0:
        fast = 3
    elif e == 0.5:
        fast = 4
    elif e == 1.0:
        fast = 5
    else:
        fast = 0
    for r in range(n):
        s = eps2
        for k in range(m):
            s += y[r, k] * y[r, k]
        if s == 0.0:
            coef[r] = 0.0
            continue
        if fast == 1:
            base = 1.0 / sqrt(s)
        elif fast == 2:
            base = 1.0 / sqrt(sqrt(s))
        elif fast == 3:
            base = 1.0
        elif fast == 4:
            base = sqrt(s)
        elif fast == 5:
            base = s
        else:
            base = pow(s, e)
        total += w[r] * base * s
        coef[r] = p * w[r] * base
    return total, coef_arr


def row_norms(const double[:, ::1] y):
    cdef Py_ssize_t n = y.shape[0], m = y.shape[1], r, k
    cdef double s
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for r in range(n):
        s = 0.0
        for k in range(m):
            s += y[r, k] * y[r, k]
        out[r] = sqrt(s)
    return out_arr
