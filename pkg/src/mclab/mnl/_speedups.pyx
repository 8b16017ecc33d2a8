# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled likelihood kernel: same contract as _kernels_py.loglik_grad_hess.

Row-major loops over observations with a per-row stabilized softmax; the
accumulation order over n matches the numpy fallback's sum semantics to
reduction rounding.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def loglik_grad_hess(double[:, :, ::1] design, cnp.uint8_t[:, ::1] avail,
                     cnp.int64_t[::1] chosen, double[::1] beta):
    cdef Py_ssize_t n = design.shape[0]
    cdef Py_ssize_t n_alt = design.shape[1]
    cdef Py_ssize_t n_par = design.shape[2]

    grad_arr = np.zeros(n_par, dtype=np.float64)
    hess_arr = np.zeros((n_par, n_par), dtype=np.float64)
    v_arr = np.empty(n_alt, dtype=np.float64)
    p_arr = np.empty(n_alt, dtype=np.float64)
    xbar_arr = np.empty(n_par, dtype=np.float64)

    cdef double[::1] grad = grad_arr
    cdef double[:, ::1] hess = hess_arr
    cdef double[::1] v = v_arr
    cdef double[::1] p = p_arr
    cdef double[::1] xbar = xbar_arr

    cdef double lnl = 0.0
    cdef double vmax, denom, acc, w
    cdef Py_ssize_t i, j, k, q, c

    for i in range(n):
        vmax = -INFINITY
        for j in range(n_alt):
            acc = 0.0
            for k in range(n_par):
                acc += design[i, j, k] * beta[k]
            v[j] = acc
            if avail[i, j] and acc > vmax:
                vmax = acc

        denom = 0.0
        for j in range(n_alt):
            if avail[i, j]:
                p[j] = exp(v[j] - vmax)
                denom += p[j]
            else:
                p[j] = 0.0

        c = <Py_ssize_t> chosen[i]
        lnl += v[c] - (vmax + log(denom))

        for k in range(n_par):
            acc = 0.0
            for j in range(n_alt):
                if avail[i, j]:
                    acc += (p[j] / denom) * design[i, j, k]
            xbar[k] = acc
            grad[k] += design[i, c, k] - acc

        for j in range(n_alt):
            if not avail[i, j]:
                continue
            w = p[j] / denom
            for k in range(n_par):
                for q in range(k, n_par):
                    hess[k, q] -= w * design[i, j, k] * design[i, j, q]
        for k in range(n_par):
            for q in range(k, n_par):
                hess[k, q] += xbar[k] * xbar[q]

    for k in range(n_par):
        for q in range(k + 1, n_par):
            hess[q, k] = hess[k, q]

    return lnl, grad_arr, hess_arr
