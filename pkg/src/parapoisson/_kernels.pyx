# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled block-tridiagonal solver (same contract as ``_kernels_ref``)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

ctypedef double complex cplx

cdef inline double cabs1(cplx z) nogil:
    return fabs(z.real) + fabs(z.imag)


cdef int lu_solve_inplace(cplx[:, :] a, cplx[:, :] b, Py_ssize_t m, Py_ssize_t ncol) nogil:
    """Gaussian elimination with partial pivoting; overwrites ``b`` with a^{-1} b."""
    cdef Py_ssize_t i, j, k, p
    cdef cplx t, f
    cdef double best
    for k in range(m):
        p = k
        best = cabs1(a[k, k])
        for i in range(k + 1, m):
            if cabs1(a[i, k]) > best:
                best = cabs1(a[i, k])
                p = i
        if best == 0.0:
            return -1
        if p != k:
            for j in range(m):
                t = a[k, j]; a[k, j] = a[p, j]; a[p, j] = t
            for j in range(ncol):
                t = b[k, j]; b[k, j] = b[p, j]; b[p, j] = t
        for i in range(k + 1, m):
            f = a[i, k] / a[k, k]
            if f != 0:
                for j in range(k, m):
                    a[i, j] = a[i, j] - f * a[k, j]
                for j in range(ncol):
                    b[i, j] = b[i, j] - f * b[k, j]
    for k in range(m - 1, -1, -1):
        for j in range(ncol):
            t = b[k, j]
            for i in range(k + 1, m):
                t = t - a[k, i] * b[i, j]
            b[k, j] = t / a[k, k]
    return 0


def block_tridiag_solve(lower, diag, upper, rhs):
    cdef cplx[:, :, ::1] lo = np.ascontiguousarray(lower, dtype=np.complex128)
    cdef cplx[:, :, ::1] up = np.ascontiguousarray(upper, dtype=np.complex128)
    cdef cplx[:, :, :, ::1] dg = np.ascontiguousarray(diag, dtype=np.complex128)
    cdef cplx[:, :, ::1] rh = np.ascontiguousarray(rhs, dtype=np.complex128)
    cdef Py_ssize_t nb = rh.shape[0], nk = rh.shape[1], m = rh.shape[2]
    cp_arr = np.empty((nb, nk, m, m), dtype=np.complex128)
    dp_arr = np.empty((nb, nk, m), dtype=np.complex128)
    x_arr = np.empty((nb, nk, m), dtype=np.complex128)
    cdef cplx[:, :, :, ::1] cp = cp_arr
    cdef cplx[:, :, ::1] dp = dp_arr
    cdef cplx[:, :, ::1] x = x_arr
    work_arr = np.empty((m, m), dtype=np.complex128)
    aug_arr = np.empty((m, m + 1), dtype=np.complex128)
    cdef cplx[:, ::1] work = work_arr
    cdef cplx[:, ::1] aug = aug_arr
    cdef Py_ssize_t b, k, i, j, l
    cdef cplx s
    cdef int status = 0
    with nogil:
        for b in range(nb):
            for k in range(nk):
                for i in range(m):
                    for j in range(m):
                        s = dg[b, k, i, j]
                        if k > 0:
                            for l in range(m):
                                s = s - lo[k, i, l] * cp[b, k - 1, l, j]
                        work[i, j] = s
                    for j in range(m):
                        aug[i, j] = up[k, i, j]
                    s = rh[b, k, i]
                    if k > 0:
                        for l in range(m):
                            s = s - lo[k, i, l] * dp[b, k - 1, l]
                    aug[i, m] = s
                if lu_solve_inplace(work, aug, m, m + 1) != 0:
                    status = -1
                    break
                for i in range(m):
                    for j in range(m):
                        cp[b, k, i, j] = aug[i, j]
                    dp[b, k, i] = aug[i, m]
            if status != 0:
                break
            for i in range(m):
                x[b, nk - 1, i] = dp[b, nk - 1, i]
            for k in range(nk - 2, -1, -1):
                for i in range(m):
                    s = dp[b, k, i]
                    for l in range(m):
                        s = s - cp[b, k, i, l] * x[b, k + 1, l]
                    x[b, k, i] = s
    if status != 0:
        raise np.linalg.LinAlgError("singular pivot block in block_tridiag_solve")
    return x_arr
