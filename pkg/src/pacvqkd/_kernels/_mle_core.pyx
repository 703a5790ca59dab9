# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-record accumulation pass for the iterative MLE.

Same contract as ``_mle_numpy.record_pass``.  The per-record work is a
d**2 quadratic form and a rank-one Hermitian update, too small for BLAS
calls to pay off, so it is written as straight loops exploiting the
Hermitian symmetry of both the conditional operator and the update.
"""

from libc.math cimport log

import numpy as np

cimport numpy as cnp

cnp.import_array()


def record_pass(
    cnp.ndarray[cnp.complex128_t, ndim=3] b_all,
    cnp.ndarray[cnp.complex128_t, ndim=2] hb,
    cnp.ndarray[cnp.int64_t, ndim=1] group_start,
    cnp.ndarray[cnp.int64_t, ndim=1] h_idx,
    double floor,
):
    """Return (s_all, log_likelihood, excluded); see the NumPy twin."""
    cdef Py_ssize_t n_groups = b_all.shape[0]
    cdef Py_ssize_t d = b_all.shape[1]
    cdef cnp.ndarray[cnp.complex128_t, ndim=3] s_all = np.zeros(
        (n_groups, d, d), dtype=np.complex128
    )

    cdef double loglike = 0.0
    cdef Py_ssize_t excluded = 0
    cdef Py_ssize_t u, s, t, j, rec, j0, j1
    cdef double complex acc, hs, hsc
    cdef double p, w

    for u in range(n_groups):
        j0 = group_start[u]
        j1 = group_start[u + 1]
        for j in range(j0, j1):
            rec = h_idx[j]
            # p = Re(h^dag B h) with B Hermitian:
            # p = sum_s B[s,s] |h_s|^2 + 2 Re sum_{s<t} conj(h_s) B[s,t] h_t
            p = 0.0
            for s in range(d):
                hsc = hb[rec, s].conjugate()
                p = p + (b_all[u, s, s] * hb[rec, s] * hsc).real
                acc = 0.0
                for t in range(s + 1, d):
                    acc = acc + b_all[u, s, t] * hb[rec, t]
                p = p + 2.0 * (hsc * acc).real
            if p <= floor:
                excluded += 1
                continue
            loglike += log(p)
            w = 1.0 / p
            # Upper triangle of s_all[u] += w h h^dag; mirrored below.
            for s in range(d):
                hs = hb[rec, s] * w
                for t in range(s, d):
                    s_all[u, s, t] = s_all[u, s, t] + hs * hb[rec, t].conjugate()
        for s in range(d):
            for t in range(s + 1, d):
                s_all[u, t, s] = s_all[u, s, t].conjugate()
    return np.asarray(s_all), loglike, int(excluded)
