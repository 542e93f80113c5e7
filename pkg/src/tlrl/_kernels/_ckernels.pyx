# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the batched PARAFAC kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef tuple _pack(factors):
    cdef Py_ssize_t D = len(factors)
    offsets = np.zeros(D + 1, dtype=np.int64)
    for d in range(D):
        offsets[d + 1] = offsets[d] + factors[d].shape[0]
    stacked = np.ascontiguousarray(np.concatenate(factors, axis=0), dtype=np.float64)
    return stacked, offsets


def row_products(factors, idx):
    cdef double[:, ::1] F
    cdef long long[::1] off
    F, off = _pack(list(factors))
    cdef long long[:, ::1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef Py_ssize_t n = ix.shape[0], D = ix.shape[1], K = F.shape[1]
    out_arr = np.ones((n, K))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, d, k, r
    with nogil:
        for i in range(n):
            for d in range(D):
                r = off[d] + ix[i, d]
                for k in range(K):
                    out[i, k] *= F[r, k]
    return out_arr


def accumulate(factors, idx, weights, grads):
    cdef double[:, ::1] F
    cdef long long[::1] off
    F, off = _pack(list(factors))
    cdef long long[:, ::1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef double[:, ::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = ix.shape[0], D = ix.shape[1], K = F.shape[1]
    G_arr = np.zeros((F.shape[0], K))
    cdef double[:, ::1] G = G_arr
    cdef double *pre = <double *> malloc(D * sizeof(double))
    cdef Py_ssize_t i, d, k
    cdef double suf
    try:
        with nogil:
            for i in range(n):
                for k in range(K):
                    pre[0] = 1.0
                    for d in range(1, D):
                        pre[d] = pre[d - 1] * F[off[d - 1] + ix[i, d - 1], k]
                    suf = w[i, k]
                    for d in range(D - 1, -1, -1):
                        G[off[d] + ix[i, d], k] += pre[d] * suf
                        suf = suf * F[off[d] + ix[i, d], k]
    finally:
        free(pre)
    for d in range(D):
        grads[d] += G_arr[off[d]:off[d + 1]]


def jvp(factors, tangents, idx):
    cdef double[:, ::1] F
    cdef double[:, ::1] V
    cdef long long[::1] off
    F, off = _pack(list(factors))
    V, _ = _pack(list(tangents))
    cdef long long[:, ::1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef Py_ssize_t n = ix.shape[0], D = ix.shape[1], K = F.shape[1]
    out_arr = np.zeros((n, K))
    cdef double[:, ::1] out = out_arr
    cdef double *pre = <double *> malloc(D * sizeof(double))
    cdef Py_ssize_t i, d, k
    cdef double suf, acc
    try:
        with nogil:
            for i in range(n):
                for k in range(K):
                    pre[0] = 1.0
                    for d in range(1, D):
                        pre[d] = pre[d - 1] * F[off[d - 1] + ix[i, d - 1], k]
                    suf = 1.0
                    acc = 0.0
                    for d in range(D - 1, -1, -1):
                        acc += V[off[d] + ix[i, d], k] * pre[d] * suf
                        suf = suf * F[off[d] + ix[i, d], k]
                    out[i, k] = acc
    finally:
        free(pre)
    return out_arr
