# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pairwise leave-one-out kernels (same contract as _kernels_py)."""

from libc.math cimport sqrt, pow


def weighted_power_sum(double[:, ::1] out, double[::1] w, double p):
    cdef Py_ssize_t K = out.shape[0], d = out.shape[1]
    cdef Py_ssize_t a, b, j
    cdef double total = 0.0, acc, diff, dist
    with nogil:
        for a in range(K):
            for b in range(a + 1, K):
                acc = 0.0
                for j in range(d):
                    diff = out[a, j] - out[b, j]
                    acc += diff * diff
                dist = sqrt(acc)
                if p != 1.0:
                    dist = pow(dist, p)
                total += w[a] * w[b] * dist
    return 2.0 * total


def weighted_max_dist(double[:, ::1] out, double[::1] w):
    cdef Py_ssize_t K = out.shape[0], d = out.shape[1]
    cdef Py_ssize_t a, b, j, ba = 0, bb = 0
    cdef double best = 0.0, acc, diff
    with nogil:
        for a in range(K):
            if w[a] <= 0:
                continue
            for b in range(a + 1, K):
                if w[b] <= 0:
                    continue
                acc = 0.0
                for j in range(d):
                    diff = out[a, j] - out[b, j]
                    acc += diff * diff
                if acc > best:
                    best = acc
                    ba = a
                    bb = b
    return sqrt(best), ba, bb
