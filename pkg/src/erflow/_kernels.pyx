# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Element-batch quadrature contractions (compiled backend)."""

import numpy as np
cimport numpy as cnp


def weighted_gram(const double[:, :, :, ::1] B, const double[:, :, :, ::1] D,
                  const double[:, ::1] w):
    """out[t] = sum_q w[t,q] * B[t,q]^T D[t,q] B[t,q]."""
    cdef Py_ssize_t T = B.shape[0], Q = B.shape[1], m = B.shape[2], n = B.shape[3]
    cdef Py_ssize_t t, q, a, b, i, j
    out_arr = np.zeros((T, n, n))
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, ::1] DB = np.empty((m, n))
    cdef double s, wq
    for t in range(T):
        for q in range(Q):
            wq = w[t, q]
            if wq == 0.0:
                continue
            for a in range(m):
                for j in range(n):
                    s = 0.0
                    for b in range(m):
                        s += D[t, q, a, b] * B[t, q, b, j]
                    DB[a, j] = wq * s
            for i in range(n):
                for j in range(n):
                    s = 0.0
                    for a in range(m):
                        s += B[t, q, a, i] * DB[a, j]
                    out[t, i, j] += s
    return out_arr


def weighted_outer(const double[:, :, ::1] L, const double[:, :, ::1] R,
                   const double[:, ::1] w):
    """out[t] = sum_q w[t,q] * outer(L[t,q], R[t,q])."""
    cdef Py_ssize_t T = L.shape[0], Q = L.shape[1], n1 = L.shape[2], n2 = R.shape[2]
    cdef Py_ssize_t t, q, i, j
    out_arr = np.zeros((T, n1, n2))
    cdef double[:, :, ::1] out = out_arr
    cdef double li
    for t in range(T):
        for q in range(Q):
            for i in range(n1):
                li = w[t, q] * L[t, q, i]
                if li == 0.0:
                    continue
                for j in range(n2):
                    out[t, i, j] += li * R[t, q, j]
    return out_arr


def weighted_apply(const double[:, :, :, ::1] B, const double[:, :, ::1] s,
                   const double[:, ::1] w):
    """out[t] = sum_q w[t,q] * B[t,q]^T s[t,q]."""
    cdef Py_ssize_t T = B.shape[0], Q = B.shape[1], m = B.shape[2], n = B.shape[3]
    cdef Py_ssize_t t, q, a, j
    out_arr = np.zeros((T, n))
    cdef double[:, ::1] out = out_arr
    cdef double acc
    for t in range(T):
        for q in range(Q):
            for j in range(n):
                acc = 0.0
                for a in range(m):
                    acc += B[t, q, a, j] * s[t, q, a]
                out[t, j] += w[t, q] * acc
    return out_arr
