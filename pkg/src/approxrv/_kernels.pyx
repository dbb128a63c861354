# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the hot evaluation paths.

Each loop body is straight-line code: the half-domain predicate and the
interval cap are arithmetic selects, never control flow, so the per
element work is identical whatever the input values.
"""

import numpy as np

from libc.math cimport sqrt as c_sqrt

COMPILED = True


def constant_eval(const double[::1] values, const double[::1] u, double[::1] out):
    cdef Py_ssize_t i, n = u.shape[0]
    cdef long long nvals = values.shape[0], idx
    cdef double scale = <double> nvals
    for i in range(n):
        idx = <long long> (scale * u[i])
        idx = idx if idx < nvals else nvals - 1
        out[i] = values[idx]


def dyadic_index(const double[::1] u, long long cap):
    cdef Py_ssize_t i, n = u.shape[0]
    out_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef double v
    cdef unsigned long long bits
    cdef long long idx
    for i in range(n):
        v = u[i]
        bits = (<unsigned long long*> &v)[0]
        idx = 1022 - <long long> (bits >> 52)
        out[i] = idx if idx < cap else cap
    return out_arr


def dyadic_index32(const float[::1] u, long long cap):
    cdef Py_ssize_t i, n = u.shape[0]
    out_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef float v
    cdef unsigned int bits
    cdef long long idx
    for i in range(n):
        v = u[i]
        bits = (<unsigned int*> &v)[0]
        idx = 126 - <long long> (bits >> 23)
        out[i] = idx if idx < cap else cap
    return out_arr


def dyadic_eval(const double[:, ::1] coeffs, const double[::1] u, double[::1] out):
    cdef Py_ssize_t i, n = u.shape[0]
    cdef int d, degree = <int> coeffs.shape[0] - 1
    cdef long long cap = coeffs.shape[1] - 1, idx
    cdef double v, z
    cdef unsigned long long bits
    cdef bint pred
    for i in range(n):
        v = u[i]
        pred = v < 0.5
        v = v if pred else 1.0 - v
        bits = (<unsigned long long*> &v)[0]
        idx = 1022 - <long long> (bits >> 52)
        idx = idx if idx < cap else cap
        z = coeffs[degree, idx]
        for d in range(degree - 1, -1, -1):
            z = z * v + coeffs[d, idx]
        out[i] = z if pred else -z


def dyadic_eval32(const float[:, ::1] coeffs, const float[::1] u, float[::1] out):
    cdef Py_ssize_t i, n = u.shape[0]
    cdef int d, degree = <int> coeffs.shape[0] - 1
    cdef long long cap = coeffs.shape[1] - 1, idx
    cdef float v, z
    cdef unsigned int bits
    cdef bint pred
    for i in range(n):
        v = u[i]
        pred = v < 0.5
        v = v if pred else 1.0 - v
        bits = (<unsigned int*> &v)[0]
        idx = 126 - <long long> (bits >> 23)
        idx = idx if idx < cap else cap
        z = coeffs[degree, idx]
        for d in range(degree - 1, -1, -1):
            z = z * v + coeffs[d, idx]
        out[i] = z if pred else -z


def ncchi2_eval(
    const double[:, :, :, ::1] stacks,
    double nu,
    const double[::1] u,
    const double[::1] lam,
    double[::1] out,
):
    # stacks[0] holds the upper-half tables, stacks[1] the lower-half;
    # the half-domain predicate is the first index, so table selection is
    # an address computation rather than control flow.
    cdef Py_ssize_t i, n = u.shape[0]
    cdef int d, degree = <int> stacks.shape[2] - 1
    cdef long long n_knots = stacks.shape[1], cap = stacks.shape[3] - 1
    cdef long long idx, j, sel
    cdef bint shared = lam.shape[0] == 1
    cdef double lam_i = lam[0], shift, scale2, s, g, t, v, z0, z1
    cdef unsigned long long bits

    shift = lam_i + nu
    scale2 = 2.0 * c_sqrt(shift)
    s = c_sqrt(nu / shift)
    g = s * (n_knots - 1)
    j = <long long> g
    j = j if j < n_knots - 2 else n_knots - 2
    t = g - j

    for i in range(n):
        if not shared:
            lam_i = lam[i]
            shift = lam_i + nu
            scale2 = 2.0 * c_sqrt(shift)
            s = c_sqrt(nu / shift)
            g = s * (n_knots - 1)
            j = <long long> g
            j = j if j < n_knots - 2 else n_knots - 2
            t = g - j
        v = u[i]
        sel = <long long> (v < 0.5)
        v = v if sel else 1.0 - v
        bits = (<unsigned long long*> &v)[0]
        idx = 1022 - <long long> (bits >> 52)
        idx = idx if idx < cap else cap
        z0 = stacks[sel, j, degree, idx]
        z1 = stacks[sel, j + 1, degree, idx]
        for d in range(degree - 1, -1, -1):
            z0 = z0 * v + stacks[sel, j, d, idx]
            z1 = z1 * v + stacks[sel, j + 1, d, idx]
        out[i] = shift + scale2 * (z0 + t * (z1 - z0))
