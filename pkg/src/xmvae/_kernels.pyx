# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Arithmetic order matches ``_pykernels`` so both backends agree bit-for-bit."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def adam_update(double[::1] value, const double[::1] grad, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, double bc1, double bc2):
    cdef Py_ssize_t i, n = value.shape[0]
    cdef double c1 = 1.0 - beta1
    cdef double c2 = 1.0 - beta2
    cdef double g, mi, vi
    with nogil:
        for i in range(n):
            g = grad[i]
            mi = beta1 * m[i] + c1 * g
            vi = beta2 * v[i] + c2 * (g * g)
            m[i] = mi
            v[i] = vi
            value[i] = value[i] - lr * (mi / bc1) / (sqrt(vi / bc2) + eps)


def relu_forward(const double[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = x[i] if x[i] > 0.0 else 0.0
    return out


def relu_backward(const double[::1] x, const double[::1] grad):
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = grad[i] if x[i] > 0.0 else 0.0
    return out


def joint_errors(const double[:, ::1] pred, const double[:, ::1] gt, Py_ssize_t dim):
    cdef Py_ssize_t f, j, k, frames = pred.shape[0]
    cdef Py_ssize_t joints = pred.shape[1] // dim
    cdef double acc, d
    out = np.empty((frames, joints), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for f in range(frames):
            for j in range(joints):
                acc = 0.0
                for k in range(dim):
                    d = pred[f, j * dim + k] - gt[f, j * dim + k]
                    acc = acc + d * d
                o[f, j] = sqrt(acc)
    return out


def fraction_at_most(const double[::1] values, const double[::1] thresholds):
    cdef Py_ssize_t t, lo, hi, mid, n = values.shape[0], nt = thresholds.shape[0]
    cdef double d
    ordered_arr = np.sort(values)
    cdef const double[::1] ordered = ordered_arr
    out = np.empty(nt, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for t in range(nt):
            d = thresholds[t]
            # upper bound: first index with ordered[i] > d (NaNs sort last and never count)
            lo = 0
            hi = n
            while lo < hi:
                mid = (lo + hi) // 2
                if ordered[mid] <= d:
                    lo = mid + 1
                else:
                    hi = mid
            o[t] = <double>lo / <double>n
    return out
