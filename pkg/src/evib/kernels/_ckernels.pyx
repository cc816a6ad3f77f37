# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Signatures mirror ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, M_PI

cnp.import_array()


def sosfilt(const double[:, ::1] sos, const double[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nsec = sos.shape[0]
    cdef Py_ssize_t i, s
    cdef double b0, b1, b2, a1, a2, z1, z2, xi, yi
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    y[:] = x
    for s in range(nsec):
        b0 = sos[s, 0]
        b1 = sos[s, 1]
        b2 = sos[s, 2]
        a1 = sos[s, 4]
        a2 = sos[s, 5]
        z1 = 0.0
        z2 = 0.0
        for i in range(n):
            xi = y[i]
            yi = b0 * xi + z1
            z1 = b1 * xi - a1 * yi + z2
            z2 = b2 * xi - a2 * yi
            y[i] = yi
    return out


def moving_average(const double[::1] x, Py_ssize_t width):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t half = width // 2
    cdef Py_ssize_t i, lo, hi
    cdef double acc = 0.0
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    # running sum over the clipped window [i - half, i + half]
    hi = min(half, n - 1)
    for i in range(hi + 1):
        acc += x[i]
    for i in range(n):
        lo = i - half
        if lo < 0:
            lo = 0
        hi = i + half
        if hi > n - 1:
            hi = n - 1
        y[i] = acc / (hi - lo + 1)
        if i + half + 1 < n:
            acc += x[i + half + 1]
        if i - half >= 0:
            acc -= x[i - half]
    return out


def runs_above(const double[::1] x, double threshold, Py_ssize_t min_len):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, start = -1
    runs = []
    for i in range(n):
        if x[i] > threshold:
            if start < 0:
                start = i
        elif start >= 0:
            if i - start >= min_len:
                runs.append((start, i - 1))
            start = -1
    if start >= 0 and n - start >= min_len:
        runs.append((start, n - 1))
    return runs


def dft_bin(const double[::1] x, double k):
    """Goertzel evaluation of sum_n x[n] exp(-2j pi k n / N)."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef double w = 2.0 * M_PI * k / n
    cdef double coeff = 2.0 * cos(w)
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0
    for i in range(n):
        s0 = x[i] + coeff * s1 - s2
        s2 = s1
        s1 = s0
    # y[N-1] = s1 - exp(-jw) s2 = exp(jw(N-1)) X
    cdef double re = s1 - cos(w) * s2
    cdef double im = sin(w) * s2
    cdef double c = cos(w * (n - 1)), s = sin(w * (n - 1))
    return complex(re * c + im * s, im * c - re * s)
