# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Must stay bit-for-bit equivalent to ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def fisher_yates(cnp.int64_t[::1] perm, const cnp.int64_t[::1] draws):
    """Shuffle ``perm`` in place; ``draws[i]`` is the swap partner of ``n-1-i``."""
    cdef Py_ssize_t n = perm.shape[0]
    cdef Py_ssize_t i, j
    cdef cnp.int64_t tmp
    if n > 0 and draws.shape[0] < n - 1:
        raise ValueError("not enough draws for permutation")
    for i in range(n - 1):
        j = draws[i]
        tmp = perm[n - 1 - i]
        perm[n - 1 - i] = perm[j]
        perm[j] = tmp


def cover_sums(const cnp.int64_t[::1] prev, const cnp.int64_t[::1] top,
               const double[:, ::1] node_values, double[:, ::1] out):
    """out[i] = out[prev[i]] + node_values[top[i]], with prev[i] < 0 meaning zero."""
    cdef Py_ssize_t n_close = prev.shape[0]
    cdef Py_ssize_t dim = node_values.shape[1]
    cdef Py_ssize_t i, c
    cdef cnp.int64_t p, v
    for i in range(n_close):
        p = prev[i]
        v = top[i]
        if p < 0:
            for c in range(dim):
                out[i, c] = node_values[v, c]
        else:
            for c in range(dim):
                out[i, c] = out[p, c] + node_values[v, c]
