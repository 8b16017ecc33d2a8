"""Numpy implementation of the likelihood kernel.

Computes the availability-conditioned multinomial logit log-likelihood,
its analytic gradient, and the analytic Hessian in one pass:

    lnL      = sum_n [ V_chosen - log sum_{j in A_n} exp(V_nj) ]
    grad_p   = sum_n [ Z_{n,c,p} - sum_j P_nj Z_njp ]
    hess_pq  = -sum_n [ sum_j P_nj Z_njp Z_njq - xbar_p xbar_q ]

with V = Z beta and xbar the probability-weighted mean of Z over the
available set. The compiled twin in _speedups.pyx must match this to
floating-point reduction error.
"""

from __future__ import annotations

import numpy as np


def loglik_grad_hess(design, avail, chosen, beta):
    """Return (lnl, grad, hess) for the dataset.

    design: (N, J, P) float64; avail: (N, J) bool; chosen: (N,) int64;
    beta: (P,) float64.
    """
    n, _, _ = design.shape
    v = design @ beta                                   # (N, J)
    v_masked = np.where(avail, v, -np.inf)
    vmax = v_masked.max(axis=1, keepdims=True)          # (N, 1)
    expv = np.exp(v_masked - vmax)                      # 0 where unavailable
    denom = expv.sum(axis=1)                            # (N,)
    log_denom = vmax[:, 0] + np.log(denom)
    rows = np.arange(n)
    lnl = float((v[rows, chosen] - log_denom).sum())

    probs = expv / denom[:, None]                       # (N, J)
    xbar = np.einsum("nj,njp->np", probs, design)       # (N, P)
    grad = (design[rows, chosen] - xbar).sum(axis=0)

    weighted = np.einsum("nj,njp,njq->pq", probs, design, design)
    hess = -(weighted - xbar.T @ xbar)
    return lnl, grad, hess


def utilities(design, beta):
    """Systematic utilities V = Z beta, ignoring availability."""
    return design @ beta


def probabilities(v, avail):
    """Availability-conditioned softmax; exact zeros where unavailable."""
    v_masked = np.where(avail, v, -np.inf)
    vmax = v_masked.max(axis=-1, keepdims=True)
    expv = np.exp(v_masked - vmax)
    return expv / expv.sum(axis=-1, keepdims=True)
