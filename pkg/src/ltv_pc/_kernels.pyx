# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled trajectory kernels.  See ``_kernels_py`` for the reference versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def transfer_blocks(A_in):
    cdef const double[:, :, ::1] A = np.ascontiguousarray(A_in, dtype=np.float64)
    cdef Py_ssize_t p = A.shape[0]
    cdef Py_ssize_t n = A.shape[1]
    out_arr = np.zeros((p + 1, p + 1, n, n))
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, r, c, s
    cdef double acc
    for i in range(p + 1):
        for r in range(n):
            out[i, i, r, r] = 1.0
    for i in range(1, p + 1):
        for j in range(i):
            for r in range(n):
                for c in range(n):
                    acc = 0.0
                    for s in range(n):
                        acc += A[i - 1, r, s] * out[i - 1, j, s, c]
                    out[i, j, r, c] = acc
    return out_arr


def rollout(A_in, B_in, w_in, x0_in, u_in):
    cdef const double[:, :, ::1] A = np.ascontiguousarray(A_in, dtype=np.float64)
    cdef const double[:, :, ::1] B = np.ascontiguousarray(B_in, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef const double[::1] x0 = np.ascontiguousarray(x0_in, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef Py_ssize_t p = A.shape[0]
    cdef Py_ssize_t n = A.shape[1]
    cdef Py_ssize_t m = B.shape[2]
    x_arr = np.empty((p + 1, n))
    cdef double[:, ::1] x = x_arr
    cdef Py_ssize_t k, r, s
    cdef double acc
    for r in range(n):
        x[0, r] = x0[r]
    for k in range(p):
        for r in range(n):
            acc = w[k, r]
            for s in range(n):
                acc += A[k, r, s] * x[k, s]
            for s in range(m):
                acc += B[k, r, s] * u[k, s]
            x[k + 1, r] = acc
    return x_arr


def dynamics_residual(A_in, B_in, w_in, x_in, u_in):
    cdef const double[:, :, ::1] A = np.ascontiguousarray(A_in, dtype=np.float64)
    cdef const double[:, :, ::1] B = np.ascontiguousarray(B_in, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef const double[:, ::1] u = np.ascontiguousarray(u_in, dtype=np.float64)
    cdef Py_ssize_t p = A.shape[0]
    cdef Py_ssize_t n = A.shape[1]
    cdef Py_ssize_t m = B.shape[2]
    cdef Py_ssize_t k, r, s
    cdef double acc, sq, worst = 0.0
    for k in range(p):
        sq = 0.0
        for r in range(n):
            acc = x[k + 1, r] - w[k, r]
            for s in range(n):
                acc -= A[k, r, s] * x[k, s]
            for s in range(m):
                acc -= B[k, r, s] * u[k, s]
            sq += acc * acc
        if sq > worst:
            worst = sq
    return sqrt(worst)
