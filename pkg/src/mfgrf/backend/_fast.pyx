# cython: language_level=3, boundscheck=False, wraparound=False
# cython: initializedcheck=False, cdivision=True
"""Fused C loops for the feature-map hot paths.

Mirrors ``numpy_ops`` (see that module for the shape conventions) but avoids
the (M, N, q) trig temporaries by fusing projection, trig evaluation, and
reduction, with one ``sincos`` call per (point, frequency) pair.  Parallel
loops are arranged so every output element is written by exactly one thread
and every reduction runs in a fixed index order, making results independent
of the thread count.
"""

import numpy as np

cimport cython
cimport openmp
from cython.parallel import prange

cdef extern from *:
    """
    extern void sincos(double x, double *s, double *c);
    """
    void sincos(double x, double *s, double *c) nogil


def set_num_threads(int n):
    """Cap the OpenMP thread pool; n <= 0 keeps the runtime default."""
    if n > 0:
        openmp.omp_set_num_threads(n)


def feature_matrix(const double[:, ::1] freqs, double amplitude,
                   const double[:, ::1] points):
    cdef Py_ssize_t npts = points.shape[0]
    cdef Py_ssize_t q = freqs.shape[0]
    cdef Py_ssize_t k = freqs.shape[1]
    out_arr = np.empty((npts, 2 * q))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t p, j, c
    cdef double w, sv, cv
    for p in prange(npts, nogil=True):
        for j in range(q):
            w = 0.0
            for c in range(k):
                w = w + freqs[j, c] * points[p, c]
            # the in-body assignments keep sv/cv thread-private
            sv = 0.0
            cv = 0.0
            sincos(w, &sv, &cv)
            out[p, 2 * j] = amplitude * cv
            out[p, 2 * j + 1] = amplitude * sv
    return out_arr


def feature_sums(const double[:, ::1] freqs, double amplitude,
                 const double[:, :, ::1] traj):
    cdef Py_ssize_t m = traj.shape[0]
    cdef Py_ssize_t n = traj.shape[1]
    cdef Py_ssize_t k = traj.shape[2]
    cdef Py_ssize_t q = freqs.shape[0]
    out_arr = np.zeros((2 * q, n))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t l, i, j, c
    cdef double w, sv, cv
    # Parallel over time slices: the agent reduction inside a slice stays
    # sequential, so sums are bit-identical for any thread count.
    for l in prange(n, nogil=True):
        for i in range(m):
            for j in range(q):
                w = 0.0
                for c in range(k):
                    w = w + freqs[j, c] * traj[i, l, c]
                sv = 0.0
                cv = 0.0
                sincos(w, &sv, &cv)
                out[2 * j, l] += cv
                out[2 * j + 1, l] += sv
        for j in range(2 * q):
            out[j, l] *= amplitude
    return out_arr


def dual_potential(const double[:, ::1] freqs, double amplitude,
                   const double[:, :, ::1] traj, const double[:, ::1] duals):
    cdef Py_ssize_t m = traj.shape[0]
    cdef Py_ssize_t n = traj.shape[1]
    cdef Py_ssize_t k = traj.shape[2]
    cdef Py_ssize_t q = freqs.shape[0]
    out_arr = np.empty((m, n))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t idx, i, l, j, c
    cdef double w, acc, sv, cv
    for idx in prange(m * n, nogil=True):
        i = idx // n
        l = idx % n
        acc = 0.0
        for j in range(q):
            w = 0.0
            for c in range(k):
                w = w + freqs[j, c] * traj[i, l, c]
            sv = 0.0
            cv = 0.0
            sincos(w, &sv, &cv)
            acc = acc + duals[2 * j, l] * cv + duals[2 * j + 1, l] * sv
        out[i, l] = amplitude * acc
    return out_arr


def dual_force(const double[:, ::1] freqs, double amplitude,
               const double[:, :, ::1] traj, const double[:, ::1] duals):
    cdef Py_ssize_t m = traj.shape[0]
    cdef Py_ssize_t n = traj.shape[1]
    cdef Py_ssize_t k = traj.shape[2]
    cdef Py_ssize_t q = freqs.shape[0]
    out_arr = np.zeros((m, n, k))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t idx, i, l, j, c
    cdef double w, beta, sv, cv
    for idx in prange(m * n, nogil=True):
        i = idx // n
        l = idx % n
        for j in range(q):
            w = 0.0
            for c in range(k):
                w = w + freqs[j, c] * traj[i, l, c]
            sv = 0.0
            cv = 0.0
            sincos(w, &sv, &cv)
            beta = duals[2 * j + 1, l] * cv - duals[2 * j, l] * sv
            for c in range(k):
                out[i, l, c] += beta * freqs[j, c]
        for c in range(k):
            out[i, l, c] *= amplitude
    return out_arr
