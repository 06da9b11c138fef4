# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense kernels: cache-blocked chain-product multiply and row-norm scans.

The accumulation order inside every output entry is fixed by the block
schedule (block size is the compile-time constant BLOCK), so results are
bit-reproducible run to run and independent of any outer parallelism.
"""

from libc.math cimport fabs

import numpy as np

cimport numpy as cnp

cnp.import_array()

DEF BLOCK = 64


def matmul(const double[:, ::1] a, const double[:, ::1] b):
    """Dense product a @ b via a blocked i/k/j triple loop."""
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t p = a.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    if b.shape[0] != p:
        raise ValueError("inner dimensions disagree")
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i0, k0, j0, i1, k1, j1, i, k, j
    cdef double aik
    for i0 in range(0, m, BLOCK):
        i1 = i0 + BLOCK
        if i1 > m:
            i1 = m
        for k0 in range(0, p, BLOCK):
            k1 = k0 + BLOCK
            if k1 > p:
                k1 = p
            for j0 in range(0, n, BLOCK):
                j1 = j0 + BLOCK
                if j1 > n:
                    j1 = n
                for i in range(i0, i1):
                    for k in range(k0, k1):
                        aik = a[i, k]
                        for j in range(j0, j1):
                            c[i, j] += aik * b[k, j]
    return out


def inf_norm(const double[:, ::1] a):
    """Maximum over rows of the sum of absolute entries of the row."""
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    cdef double best = 0.0
    cdef double s
    cdef Py_ssize_t i, j
    for i in range(m):
        s = 0.0
        for j in range(n):
            s += fabs(a[i, j])
        if s > best:
            best = s
    return best


def abs_row_sums(const double[:, ::1] a):
    """Vector of per-row sums of absolute entries."""
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] r = out
    cdef double s
    cdef Py_ssize_t i, j
    for i in range(m):
        s = 0.0
        for j in range(n):
            s += fabs(a[i, j])
        r[i] = s
    return out
