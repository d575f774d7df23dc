# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled lattice kernel loops; see ``_kernels_py`` for the contract."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from libc.stdlib cimport labs

cnp.import_array()


cdef inline double _entry(long a0, long a1, long z0, long z1, double cr, double cc,
                          double br, double bc, const double[:, ::1] table,
                          bint variable, double n) noexcept nogil:
    cdef long d0 = labs(a0 - z0)
    cdef long d1 = labs(a1 - z1)
    if variable:
        if d0 == 0 and d1 == 0:
            return 0.0
        return (cr * cc) * exp(-(n + (br + bc)) * table[d0, d1])
    return (cr * cc) * table[d0, d1]


def kernel_block(const cnp.int64_t[:, ::1] rows, const cnp.int64_t[:, ::1] cols,
                 const double[::1] c_r, const double[::1] c_c,
                 const double[::1] b_r, const double[::1] b_c,
                 const double[:, ::1] table, bint variable, double n):
    cdef Py_ssize_t R = rows.shape[0], C = cols.shape[0], i, j
    out = np.empty((R, C))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(R):
            for j in range(C):
                o[i, j] = _entry(rows[i, 0], rows[i, 1], cols[j, 0], cols[j, 1],
                                 c_r[i], c_c[j], b_r[i], b_c[j], table, variable, n)
    return out


def kernel_rowsum(const cnp.int64_t[:, ::1] rows, const cnp.int64_t[:, ::1] cols,
                  const double[::1] c_r, const double[::1] c_c,
                  const double[::1] b_r, const double[::1] b_c,
                  const double[:, ::1] table, bint variable, double n):
    cdef Py_ssize_t R = rows.shape[0], C = cols.shape[0], i, j
    cdef double acc
    out = np.empty(R)
    cdef double[::1] o = out
    with nogil:
        for i in range(R):
            acc = 0.0
            for j in range(C):
                acc += _entry(rows[i, 0], rows[i, 1], cols[j, 0], cols[j, 1],
                              c_r[i], c_c[j], b_r[i], b_c[j], table, variable, n)
            o[i] = acc
    return out
