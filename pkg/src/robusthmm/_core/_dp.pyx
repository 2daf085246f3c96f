# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dynamic-programming recursions over precomputed log scores.

Semantics match ``robusthmm._core.dp_py`` exactly: ties go to the lower
predecessor index, ``-inf`` scores are legal everywhere.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef inline double _lse_col(const double[::1] prev, const double[:, ::1] logA,
                            Py_ssize_t q, double[::1] tmp) noexcept nogil:
    cdef Py_ssize_t j, S = prev.shape[0]
    cdef double m = -INFINITY, v, s = 0.0
    for j in range(S):
        v = prev[j] + logA[j, q]
        tmp[j] = v
        if v > m:
            m = v
    if m == -INFINITY:
        return -INFINITY
    for j in range(S):
        s += exp(tmp[j] - m)
    return m + log(s)


def viterbi(const double[::1] log_init, const double[:, ::1] log_trans,
            const double[:, ::1] log_emit):
    cdef Py_ssize_t N = log_emit.shape[0], S = log_emit.shape[1]
    cdef Py_ssize_t n, q, j, best_j
    cdef double best, v
    delta_arr = np.empty(S)
    new_arr = np.empty(S)
    bp_arr = np.zeros((N, S), dtype=np.intp)
    path_arr = np.zeros(N, dtype=np.intp)
    cdef double[::1] delta = delta_arr
    cdef double[::1] new = new_arr
    cdef Py_ssize_t[:, ::1] bp = bp_arr
    cdef Py_ssize_t[::1] path = path_arr
    with nogil:
        for q in range(S):
            delta[q] = log_init[q] + log_emit[0, q]
        for n in range(1, N):
            for q in range(S):
                best = -INFINITY
                best_j = 0
                for j in range(S):
                    v = delta[j] + log_trans[j, q]
                    if v > best:
                        best = v
                        best_j = j
                bp[n, q] = best_j
                new[q] = best + log_emit[n, q]
            for q in range(S):
                delta[q] = new[q]
        best = -INFINITY
        best_j = 0
        for q in range(S):
            if delta[q] > best:
                best = delta[q]
                best_j = q
        path[N - 1] = best_j
        for n in range(N - 1, 0, -1):
            path[n - 1] = bp[n, path[n]]
    return path_arr, float(delta_arr[best_j])


def viterbi_pair(const double[::1] log_init, const double[:, ::1] log_trans,
                 const double[::1] log_emit_first, const double[:, :, ::1] log_emit_pair):
    cdef Py_ssize_t N = log_emit_pair.shape[0], S = log_emit_first.shape[0]
    cdef Py_ssize_t n, q, j, best_j
    cdef double best, v
    delta_arr = np.empty(S)
    new_arr = np.empty(S)
    bp_arr = np.zeros((N, S), dtype=np.intp)
    path_arr = np.zeros(N, dtype=np.intp)
    cdef double[::1] delta = delta_arr
    cdef double[::1] new = new_arr
    cdef Py_ssize_t[:, ::1] bp = bp_arr
    cdef Py_ssize_t[::1] path = path_arr
    with nogil:
        for q in range(S):
            delta[q] = log_init[q] + log_emit_first[q]
        for n in range(1, N):
            for q in range(S):
                best = -INFINITY
                best_j = 0
                for j in range(S):
                    v = delta[j] + log_trans[j, q] + log_emit_pair[n, j, q]
                    if v > best:
                        best = v
                        best_j = j
                bp[n, q] = best_j
                new[q] = best
            for q in range(S):
                delta[q] = new[q]
        best = -INFINITY
        best_j = 0
        for q in range(S):
            if delta[q] > best:
                best = delta[q]
                best_j = q
        path[N - 1] = best_j
        for n in range(N - 1, 0, -1):
            path[n - 1] = bp[n, path[n]]
    return path_arr, float(delta_arr[best_j])


# Below this a linear-domain sum may have lost digits to underflow; such entries are
# recomputed with the exact log-sum-exp.
cdef double _TINY = 1e-290


def forward_matrix(const double[::1] log_init, const double[:, ::1] log_trans,
                   const double[:, ::1] log_emit):
    cdef Py_ssize_t N = log_emit.shape[0], S = log_emit.shape[1]
    cdef Py_ssize_t n, q, j
    cdef double m, w
    alpha_arr = np.empty((N, S))
    tmp_arr = np.empty(S)
    acc_arr = np.empty(S)
    trans_arr = np.exp(np.asarray(log_trans))
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[::1] tmp = tmp_arr
    cdef double[::1] acc = acc_arr
    cdef double[:, ::1] A = trans_arr
    with nogil:
        for q in range(S):
            alpha[0, q] = log_init[q] + log_emit[0, q]
        for n in range(1, N):
            # alpha[n, q] = m + log sum_j exp(alpha[n-1, j] - m) A[j, q]
            m = -INFINITY
            for j in range(S):
                if alpha[n - 1, j] > m:
                    m = alpha[n - 1, j]
            for q in range(S):
                acc[q] = 0.0
            if m != -INFINITY:
                for j in range(S):
                    w = exp(alpha[n - 1, j] - m)
                    if w != 0.0:
                        for q in range(S):
                            acc[q] += w * A[j, q]
            for q in range(S):
                if acc[q] > _TINY:
                    alpha[n, q] = m + log(acc[q]) + log_emit[n, q]
                else:
                    alpha[n, q] = _lse_col(alpha[n - 1], log_trans, q, tmp) + log_emit[n, q]
    return alpha_arr


def backward_matrix(const double[:, ::1] log_trans, const double[:, ::1] log_emit):
    cdef Py_ssize_t N = log_emit.shape[0], S = log_emit.shape[1]
    cdef Py_ssize_t n, q, j
    cdef double m, s, v
    beta_arr = np.zeros((N, S))
    tmp_arr = np.empty(S)
    wgt_arr = np.empty(S)
    trans_arr = np.exp(np.asarray(log_trans))
    cdef double[:, ::1] beta = beta_arr
    cdef double[::1] tmp = tmp_arr
    cdef double[::1] wgt = wgt_arr
    cdef double[:, ::1] A = trans_arr
    with nogil:
        for n in range(N - 2, -1, -1):
            # beta[n, q] = m + log sum_j A[q, j] exp(v_j - m), v_j = emit[n+1, j] + beta[n+1, j]
            m = -INFINITY
            for j in range(S):
                tmp[j] = log_emit[n + 1, j] + beta[n + 1, j]
                if tmp[j] > m:
                    m = tmp[j]
            if m == -INFINITY:
                for q in range(S):
                    beta[n, q] = -INFINITY
                continue
            for j in range(S):
                wgt[j] = exp(tmp[j] - m)
            for q in range(S):
                s = 0.0
                for j in range(S):
                    s += A[q, j] * wgt[j]
                if s > _TINY:
                    beta[n, q] = m + log(s)
                else:
                    # exact fallback
                    v = -INFINITY
                    for j in range(S):
                        if log_trans[q, j] + tmp[j] > v:
                            v = log_trans[q, j] + tmp[j]
                    if v == -INFINITY:
                        beta[n, q] = -INFINITY
                    else:
                        s = 0.0
                        for j in range(S):
                            s += exp(log_trans[q, j] + tmp[j] - v)
                        beta[n, q] = v + log(s)
    return beta_arr
