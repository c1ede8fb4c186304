"""Compiled inner loops.

All kernels mutate ``x`` (and the gradient table, where present) in place and
visit samples in the order given by ``order``. A component gradient is
``c_i(x) * a_i + 2 * lam * x`` where ``c_i`` is the scalar returned by
:func:`coeff`.
"""
import math

import numpy as np
from numba import njit

LOGISTIC = 0
RIDGE = 1


@njit(cache=True)
def coeff(kind, a, y, x):
    t = 0.0
    for j in range(a.shape[0]):
        t += a[j] * x[j]
    if kind == LOGISTIC:
        z = y * t
        if z >= 0.0:
            s = 1.0 / (1.0 + math.exp(-z))
        else:
            e = math.exp(z)
            s = e / (1.0 + e)
        return s * y
    return 2.0 * (t - y)


@njit(cache=True)
def _component_grad(kind, lam, a, y, x, out):
    c = coeff(kind, a, y, x)
    for j in range(x.shape[0]):
        out[j] = c * a[j] + 2.0 * lam * x[j]


@njit(cache=True)
def grad_sum(A, y, kind, lam, x):
    """Sum of component gradients over all rows, index ascending."""
    d = x.shape[0]
    acc = np.zeros(d)
    for i in range(A.shape[0]):
        c = coeff(kind, A[i], y[i], x)
        for j in range(d):
            acc[j] += c * A[i, j] + 2.0 * lam * x[j]
    return acc


@njit(cache=True)
def sgd_epoch(A, y, kind, lam, x, eta, order, G, denom, record):
    """Plain SGD steps. If ``G`` has rows, also fill the gradient table.

    Returns the running sum of the computed gradients divided by ``denom``.
    """
    d = x.shape[0]
    fill = G.shape[0] > 0
    keep = record.shape[0] > 0
    acc = np.zeros(d)
    g = np.empty(d)
    for k in range(order.shape[0]):
        i = order[k]
        if keep:
            for j in range(d):
                record[k, j] = x[j]
        _component_grad(kind, lam, A[i], y[i], x, g)
        for j in range(d):
            x[j] -= eta * g[j]
        if fill:
            for j in range(d):
                G[i, j] = g[j]
                acc[j] += g[j] / denom
    return acc


@njit(cache=True)
def sgd_epoch_compact(A, y, kind, lam, x, eta, order, C, denom):
    d = x.shape[0]
    acc = np.zeros(d)
    for k in range(order.shape[0]):
        i = order[k]
        c = coeff(kind, A[i], y[i], x)
        for j in range(d):
            x[j] -= eta * (c * A[i, j] + 2.0 * lam * x[j])
        C[i] = c
        for j in range(d):
            acc[j] += c * A[i, j] / denom
    return acc


@njit(cache=True)
def centralvr_epoch(A, y, kind, lam, x, G, gbar, eta, order, denom, record):
    """One CentralVR pass; ``gbar`` stays fixed for the whole pass.

    Returns the accumulated new gradients divided by ``denom``. When ``record``
    has rows, the pre-update iterate of step ``k`` is written to ``record[k]``.
    """
    d = x.shape[0]
    keep = record.shape[0] > 0
    acc = np.zeros(d)
    g = np.empty(d)
    for k in range(order.shape[0]):
        i = order[k]
        if keep:
            for j in range(d):
                record[k, j] = x[j]
        _component_grad(kind, lam, A[i], y[i], x, g)
        for j in range(d):
            x[j] -= eta * (g[j] - G[i, j] + gbar[j])
            acc[j] += g[j] / denom
            G[i, j] = g[j]
    return acc


@njit(cache=True)
def centralvr_epoch_compact(A, y, kind, lam, x, C, cbar, eta, order, denom):
    """Scalar-table CentralVR pass. The regularizer gradient is taken exactly at x."""
    d = x.shape[0]
    acc = np.zeros(d)
    for k in range(order.shape[0]):
        i = order[k]
        c = coeff(kind, A[i], y[i], x)
        dc = c - C[i]
        for j in range(d):
            x[j] -= eta * (dc * A[i, j] + cbar[j] + 2.0 * lam * x[j])
            acc[j] += c * A[i, j] / denom
        C[i] = c
    return acc


@njit(cache=True)
def saga_epoch(A, y, kind, lam, x, G, gbar, eta, order, n_scale):
    """SAGA steps; ``gbar`` is refreshed after every step with 1/n_scale weight."""
    d = x.shape[0]
    g = np.empty(d)
    for k in range(order.shape[0]):
        i = order[k]
        _component_grad(kind, lam, A[i], y[i], x, g)
        for j in range(d):
            delta = g[j] - G[i, j]
            x[j] -= eta * (delta + gbar[j])
            gbar[j] += delta / n_scale
            G[i, j] = g[j]


@njit(cache=True)
def saga_epoch_compact(A, y, kind, lam, x, C, cbar, eta, order, n_scale):
    d = x.shape[0]
    for k in range(order.shape[0]):
        i = order[k]
        c = coeff(kind, A[i], y[i], x)
        dc = c - C[i]
        for j in range(d):
            x[j] -= eta * (dc * A[i, j] + cbar[j] + 2.0 * lam * x[j])
            cbar[j] += dc * A[i, j] / n_scale
        C[i] = c


@njit(cache=True)
def svrg_inner(A, y, kind, lam, x, snap, snap_grad, eta, order):
    d = x.shape[0]
    gx = np.empty(d)
    gy = np.empty(d)
    for k in range(order.shape[0]):
        i = order[k]
        _component_grad(kind, lam, A[i], y[i], x, gx)
        _component_grad(kind, lam, A[i], y[i], snap, gy)
        for j in range(d):
            x[j] -= eta * (gx[j] - gy[j] + snap_grad[j])
