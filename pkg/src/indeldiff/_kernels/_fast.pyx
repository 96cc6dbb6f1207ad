# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementation of the hot chain-step kernels.

Semantics mirror ``indeldiff._kernels.reference``; see that module for the
contracts.  Kept loop-based and allocation-light: these functions run once
per node/edge batch per chain step.
"""

import numpy as np

cimport numpy as cnp

from indeldiff._kernels.reference import KernelError

cnp.import_array()


cdef Py_ssize_t _draw(const double[:, ::1] probs, Py_ssize_t row, double u) noexcept nogil:
    cdef Py_ssize_t j, last = 0, k = probs.shape[1]
    cdef double acc = 0.0
    for j in range(k):
        if probs[row, j] > 0.0:
            last = j
    for j in range(k):
        acc += probs[row, j]
        if u < acc:
            return j
    return last


def corrupt_categories(x0, abar, m, u_keep, u_cat):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] x0_a = np.ascontiguousarray(x0, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] abar_a = np.ascontiguousarray(abar, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] m_a = np.ascontiguousarray(m, dtype=np.float64).reshape(1, -1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uk = np.ascontiguousarray(u_keep, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uc = np.ascontiguousarray(u_cat, dtype=np.float64)
    cdef Py_ssize_t n = x0_a.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i
    cdef const double[:, ::1] mv = m_a
    for i in range(n):
        if uk[i] < abar_a[i]:
            out[i] = x0_a[i]
        else:
            out[i] = _draw(mv, 0, uc[i])
    return out


def reverse_step_probs(cats, p_theta, abar_t, abar_tm1, double alpha_t, m, Py_ssize_t delstar_index):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] cats_a = np.ascontiguousarray(cats, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pt = np.ascontiguousarray(p_theta, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] at = np.ascontiguousarray(abar_t, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a1 = np.ascontiguousarray(abar_tm1, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] m_a = np.ascontiguousarray(m, dtype=np.float64)
    cdef Py_ssize_t n = cats_a.shape[0], p = pt.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, p), dtype=np.float64)
    cdef Py_ssize_t i, j, c
    cdef double d, w, s_w, g, total, m_c, q
    cdef bint bad_range = 0, bad_support = 0

    for i in range(n):
        c = cats_a[i]
        total = 0.0
        if c == delstar_index:
            for j in range(p):
                out[i, j] = a1[i] * pt[i, j] + (1.0 - a1[i]) * m_a[j]
                total += out[i, j]
        else:
            if c < 0 or c >= p:
                bad_range = 1
                break
            m_c = m_a[c]
            s_w = 0.0
            for j in range(p):
                d = (1.0 - at[i]) * m_c
                if j == c:
                    d += at[i]
                if d > 0.0:
                    w = pt[i, j] / d
                else:
                    w = 0.0
                out[i, j] = w
                s_w += w
            for j in range(p):
                g = a1[i] * out[i, j] + (1.0 - a1[i]) * s_w * m_a[j]
                q = (1.0 - alpha_t) * m_c
                if j == c:
                    q += alpha_t
                out[i, j] = q * g
                total += out[i, j]
        if total <= 0.0:
            bad_support = 1
            break
        for j in range(p):
            out[i, j] /= total
    if bad_range:
        raise KernelError("current category outside the proper range")
    if bad_support:
        raise KernelError("posterior has empty support")
    return out


def sample_categorical(probs, u):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pr = np.ascontiguousarray(probs, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = pr.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef const double[:, ::1] pv = pr
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = _draw(pv, i, uu[i])
    return out
