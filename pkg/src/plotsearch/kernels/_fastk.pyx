# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_ref``.

Semantics must match ``_ref`` exactly; the parity test runs both over
randomized inputs.  Keep the two files in sync when touching either.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, sqrt

cnp.import_array()

INF = float("inf")


def interest_curve(surprisal, double center, double width):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.ascontiguousarray(surprisal, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i
    cdef double d, denom = 2.0 * width * width
    for i in range(n):
        d = s[i] - center
        out[i] = exp(-(d * d) / denom)
    return out


def band_fraction(surprisal, double center, double width):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.ascontiguousarray(surprisal, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0]
    if n == 0:
        return 0.0
    cdef Py_ssize_t i, hits = 0
    for i in range(n):
        if fabs(s[i] - center) <= width:
            hits += 1
    return hits / <double>n


def moving_average(series, int window):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.ascontiguousarray(series, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    if window < 1:
        raise ValueError("window must be >= 1")
    if n < window:
        raise ValueError("series shorter than window")
    cdef Py_ssize_t m = n - window + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(m, dtype=np.float64)
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(window):
        acc += x[i]
    out[0] = acc / window
    for i in range(1, m):
        acc += x[i + window - 1] - x[i - 1]
        out[i] = acc / window
    return out


def peak_indices(series, double prominence):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.ascontiguousarray(series, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    if n < 3:
        return np.empty(0, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] buf = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i, k = 0
    for i in range(1, n - 1):
        if x[i] - x[i - 1] >= prominence and x[i] - x[i + 1] >= prominence:
            buf[k] = i
            k += 1
    return buf[:k].copy()


def pairwise_cosine_mean_std(vectors):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] v = np.ascontiguousarray(vectors, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0], d = v.shape[1]
    if n < 2:
        raise ValueError("need at least two vectors")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] norms = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        acc = 0.0
        for k in range(d):
            acc += v[i, k] * v[i, k]
        if acc == 0.0:
            raise ValueError("zero-norm vector")
        norms[i] = sqrt(acc)
    cdef double s1 = 0.0, s2 = 0.0, cos
    cdef Py_ssize_t pairs = 0
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                acc += v[i, k] * v[j, k]
            cos = acc / (norms[i] * norms[j])
            if cos > 1.0:
                cos = 1.0
            elif cos < -1.0:
                cos = -1.0
            if fabs(cos) >= 1.0 - 1e-12:
                cos = 1.0 if cos > 0 else -1.0
            s1 += cos
            s2 += cos * cos
            pairs += 1
    cdef double mean = s1 / pairs
    cdef double var = s2 / pairs - mean * mean
    if var < 0.0:
        var = 0.0
    return mean, sqrt(var)


def ucb_scores(q, n_edge, double n_parent, double c):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] nv = np.ascontiguousarray(n_edge, dtype=np.float64)
    cdef Py_ssize_t n = qv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double n_s = n_parent if n_parent > 1.0 else 1.0
    cdef double log_ns = log(n_s)
    cdef Py_ssize_t i
    for i in range(n):
        if nv[i] > 0.0:
            out[i] = qv[i] + c * sqrt(log_ns / nv[i])
        else:
            out[i] = INF
    return out
