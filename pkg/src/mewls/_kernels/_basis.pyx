# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled basis kernel: per-point span search plus the triangular
basis-value scheme.  Mirrors _basis_py exactly."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

DEF MAX_DEGREE = 32


cdef inline Py_ssize_t _span(const double* knots, int degree, Py_ssize_t n,
                             double x) nogil:
    cdef Py_ssize_t lo, hi, mid
    if x >= knots[n]:
        return n - 1
    if x <= knots[degree]:
        return degree
    lo = degree
    hi = n
    mid = (lo + hi) // 2
    while x < knots[mid] or x >= knots[mid + 1]:
        if x < knots[mid]:
            hi = mid
        else:
            lo = mid
        mid = (lo + hi) // 2
    return mid


def find_spans(const double[::1] knots, int degree, const double[::1] t):
    cdef Py_ssize_t m = t.shape[0]
    cdef Py_ssize_t n = knots.shape[0] - degree - 1
    spans_arr = np.empty(m, dtype=np.intp)
    cdef Py_ssize_t[::1] spans = spans_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(m):
            spans[i] = _span(&knots[0], degree, n, t[i])
    return spans_arr


def basis_span_values(const double[::1] knots, int degree, const double[::1] t):
    if degree >= MAX_DEGREE:
        raise ValueError("degree too large for the compiled kernel")
    cdef Py_ssize_t m = t.shape[0]
    cdef Py_ssize_t n = knots.shape[0] - degree - 1
    spans_arr = np.empty(m, dtype=np.intp)
    values_arr = np.zeros((m, degree + 1), dtype=np.float64)
    cdef Py_ssize_t[::1] spans = spans_arr
    cdef double[:, ::1] values = values_arr
    cdef double left[MAX_DEGREE]
    cdef double right[MAX_DEGREE]
    cdef Py_ssize_t i, sp
    cdef int j, r
    cdef double saved, temp, den, x
    with nogil:
        for i in range(m):
            x = t[i]
            sp = _span(&knots[0], degree, n, x)
            spans[i] = sp
            values[i, 0] = 1.0
            for j in range(1, degree + 1):
                left[j] = x - knots[sp + 1 - j]
                right[j] = knots[sp + j] - x
                saved = 0.0
                for r in range(j):
                    den = right[r + 1] + left[j - r]
                    if den != 0.0:
                        temp = values[i, r] / den
                    else:
                        temp = 0.0
                    values[i, r] = saved + right[r + 1] * temp
                    saved = left[j - r] * temp
                values[i, j] = saved
    return spans_arr, values_arr
