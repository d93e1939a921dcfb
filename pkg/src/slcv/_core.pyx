# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels.  Semantics match ``_fallback.py`` exactly."""
import numpy as np


cdef inline double _mag(double complex z) noexcept nogil:
    return (z.real if z.real >= 0 else -z.real) + (z.imag if z.imag >= 0 else -z.imag)


cdef double complex _det10(double complex* a) noexcept nogil:
    # LU with partial pivoting, in place on a row-major 10x10 buffer
    cdef int n = 10
    cdef int i, j, k, piv
    cdef double best, m
    cdef double complex det = 1.0, t, f, inv
    for k in range(n):
        piv = k
        best = _mag(a[k * n + k])
        for i in range(k + 1, n):
            m = _mag(a[i * n + k])
            if m > best:
                best = m
                piv = i
        if best == 0.0:
            return 0.0
        if piv != k:
            for j in range(k, n):
                t = a[k * n + j]
                a[k * n + j] = a[piv * n + j]
                a[piv * n + j] = t
            det = -det
        det = det * a[k * n + k]
        inv = 1.0 / a[k * n + k]
        for i in range(k + 1, n):
            f = a[i * n + k] * inv
            for j in range(k + 1, n):
                a[i * n + j] = a[i * n + j] - f * a[k * n + j]
    return det


def det_batch(lines, planes, anchor_rows):
    """Determinants ``det(nu(L_1 pi), ..., nu(L_6 pi), nu(a_1), ..., nu(a_4))``."""
    cdef const double complex[:, :, ::1] L = np.ascontiguousarray(lines, dtype=np.complex128)
    cdef const double complex[:, ::1] P = np.ascontiguousarray(
        np.atleast_2d(planes), dtype=np.complex128)
    cdef const double complex[:, ::1] A = np.ascontiguousarray(anchor_rows, dtype=np.complex128)
    cdef Py_ssize_t n = P.shape[0]
    out_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef double complex mat[100]
    cdef double complex x[4]
    cdef Py_ssize_t s, l, i, j, c
    with nogil:
        for s in range(n):
            for l in range(6):
                for i in range(4):
                    x[i] = 0.0
                    for j in range(4):
                        x[i] = x[i] + L[l, i, j] * P[s, j]
                c = 0
                for i in range(4):
                    for j in range(i, 4):
                        mat[l * 10 + c] = x[i] * x[j]
                        c = c + 1
            for l in range(4):
                for c in range(10):
                    mat[(6 + l) * 10 + c] = A[l, c]
            out[s] = _det10(mat)
    return out_arr
