# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernel: one fused pass per path per step.

Semantics and floating-point operation order mirror reference.py exactly;
the test suite asserts bitwise-equal paths across the two backends.
"""

from libc.math cimport sqrt

BACKEND = "c"


cdef inline void _step_one(
    double[:, ::1] x, double[:, ::1] y,
    const double[:, ::1] drift_x, const double[:, ::1] drift_y,
    const double* sig, Py_ssize_t sig_stride,
    const double[:, ::1] dw, double dt, bint clamp,
    double[::1] neg, long long[::1] hits,
    double[:, ::1] pre_x, bint want_pre,
    Py_ssize_t b, Py_ssize_t n, Py_ssize_t m,
) noexcept nogil:
    cdef Py_ssize_t i, l, k, d = n + m
    cdef double s, sx, pre, newv, worst_neg = 0.0
    cdef bint on_boundary = False
    cdef const double* row

    for i in range(n):
        row = sig + i * sig_stride
        s = 0.0
        for k in range(d):
            s += row[k] * dw[b, k]
        sx = x[b, i]
        if sx < 0.0:
            sx = 0.0
        sx = sqrt(sx)
        pre = (x[b, i] + drift_x[b, i] * dt) + sx * s
        if -pre > worst_neg:
            worst_neg = -pre
        newv = pre
        if clamp and newv < 0.0:
            newv = 0.0
        if newv <= 0.0:
            on_boundary = True
        if want_pre:
            pre_x[b, i] = pre
        x[b, i] = newv
    if n:
        if worst_neg > neg[b]:
            neg[b] = worst_neg
        if on_boundary:
            hits[b] += 1
    for l in range(m):
        row = sig + (n + l) * sig_stride
        s = 0.0
        for k in range(d):
            s += row[k] * dw[b, k]
        y[b, l] = (y[b, l] + drift_y[b, l] * dt) + s


def em_step(x, y, drift_x, drift_y, sigma, dw, double dt, bint clamp,
            neg, hits, pre_x=None):
    """Same contract as reference.em_step; see that module."""
    cdef double[:, ::1] xv = x
    cdef double[:, ::1] yv = y
    cdef const double[:, ::1] bxv = drift_x
    cdef const double[:, ::1] byv = drift_y
    cdef const double[:, ::1] dwv = dw
    cdef double[::1] negv = neg
    cdef long long[::1] hitsv = hits
    cdef Py_ssize_t B = xv.shape[0]
    cdef Py_ssize_t n = xv.shape[1]
    cdef Py_ssize_t m = yv.shape[1]
    cdef Py_ssize_t b

    cdef bint want_pre = pre_x is not None
    cdef double[:, ::1] prev
    if want_pre:
        prev = pre_x
    else:
        prev = xv  # placeholder, never written

    cdef const double[:, ::1] sig2
    cdef const double[:, :, ::1] sig3
    cdef Py_ssize_t sig_stride
    if sigma.ndim == 2:
        sig2 = sigma
        sig_stride = sig2.shape[1]
        with nogil:
            for b in range(B):
                _step_one(xv, yv, bxv, byv, &sig2[0, 0], sig_stride,
                          dwv, dt, clamp, negv, hitsv, prev, want_pre, b, n, m)
    else:
        sig3 = sigma
        sig_stride = sig3.shape[2]
        with nogil:
            for b in range(B):
                _step_one(xv, yv, bxv, byv, &sig3[b, 0, 0], sig_stride,
                          dwv, dt, clamp, negv, hitsv, prev, want_pre, b, n, m)
