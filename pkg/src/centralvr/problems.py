"""Regularized empirical-risk objectives.

Each component carries the full regularizer::

    logistic:  f_i(x) = log(1 + exp(b_i a_i^T x)) + lam * ||x||^2
    ridge:     f_i(x) = (a_i^T x - b_i)^2 + lam * ||x||^2

and the objective is their mean. The logistic sign convention (``+b_i`` inside
the exponential) is kept as written; it only flips which class the minimizer
favours.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import Dataset


class LossKind(str, enum.Enum):
    LOGISTIC = "logistic"
    RIDGE = "ridge"

    @property
    def code(self) -> int:
        return _kernels.LOGISTIC if self is LossKind.LOGISTIC else _kernels.RIDGE


@dataclass(frozen=True, eq=False)
class Problem:
    kind: LossKind
    data: Dataset
    lam: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if not (self.lam >= 0 and np.isfinite(self.lam)):
            raise ValueError(f"lam must be a finite nonnegative number, got {self.lam}")
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def d(self) -> int:
        return self.data.d

    @property
    def A(self) -> np.ndarray:
        return self.data.features

    @property
    def b(self) -> np.ndarray:
        return self.data.labels


@dataclass(frozen=True)
class SmoothnessConstants:
    L: float
    mu: float

    def __post_init__(self):
        if not (self.L >= self.mu > 0):
            raise ValueError(f"need L >= mu > 0, got L={self.L}, mu={self.mu}")


def _check(p: Problem, x, i=None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.d,):
        raise ValueError(f"x must have shape ({p.d},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    if i is not None and not (0 <= i < p.n):
        raise IndexError(f"sample index {i} out of range for n={p.n}")
    return x


def softplus(t):
    """``log(1 + exp(t))`` without overflow."""
    t = np.asarray(t, dtype=np.float64)
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def loss_value(p: Problem, x, i: int) -> float:
    x = _check(p, x, i)
    t = float(p.A[i] @ x)
    if p.kind is LossKind.LOGISTIC:
        data_term = float(softplus(p.b[i] * t))
    else:
        data_term = (t - p.b[i]) ** 2
    return data_term + p.lam * float(x @ x)


def gradient_scalar_coeff(p: Problem, x, i: int) -> float:
    """Scalar ``c`` with ``c * a_i`` equal to the unregularized component gradient."""
    x = _check(p, x, i)
    t = float(p.A[i] @ x)
    if p.kind is LossKind.LOGISTIC:
        return float(sigmoid(p.b[i] * t)) * p.b[i]
    return 2.0 * (t - p.b[i])


def loss_gradient(p: Problem, x, i: int) -> np.ndarray:
    x = _check(p, x, i)
    return gradient_scalar_coeff(p, x, i) * p.A[i] + 2.0 * p.lam * x


def full_gradient(p: Problem, x) -> np.ndarray:
    """Mean component gradient, summed in ascending sample order."""
    x = _check(p, x)
    return _kernels.grad_sum(p.A, p.b, p.kind.code, p.lam, x) / p.n


def objective(p: Problem, x) -> float:
    """Mean of the component losses."""
    x = _check(p, x)
    t = p.A @ x
    if p.kind is LossKind.LOGISTIC:
        data_term = float(np.mean(softplus(p.b * t)))
    else:
        data_term = float(np.mean((t - p.b) ** 2))
    return data_term + p.lam * float(x @ x)


def component_losses(p: Problem, x) -> np.ndarray:
    """All ``f_i(x)`` at once."""
    x = _check(p, x)
    t = p.A @ x
    if p.kind is LossKind.LOGISTIC:
        data_term = softplus(p.b * t)
    else:
        data_term = (t - p.b) ** 2
    return data_term + p.lam * float(x @ x)


def component_gradients(p: Problem, x) -> np.ndarray:
    """All component gradients as an ``n x d`` matrix."""
    x = _check(p, x)
    t = p.A @ x
    if p.kind is LossKind.LOGISTIC:
        c = sigmoid(p.b * t) * p.b
    else:
        c = 2.0 * (t - p.b)
    return c[:, None] * p.A + 2.0 * p.lam * x[None, :]


def smoothness_constants(p: Problem, expensive: bool = False) -> SmoothnessConstants:
    """Safe per-component Lipschitz bound ``L`` and strong convexity bound ``mu``.

    The cheap ``mu`` is ``2 * lam``. With ``expensive=True`` it is raised to the
    strong convexity of the ridge objective, ``2 lam + 2 lambda_min(A^T A) / n``;
    logistic curvature has no useful global lower bound, so it keeps ``2 lam``.
    """
    row_sq = float(np.max(np.einsum("ij,ij->i", p.A, p.A)))
    if p.kind is LossKind.LOGISTIC:
        L = 0.25 * row_sq + 2.0 * p.lam
    else:
        L = 2.0 * row_sq + 2.0 * p.lam
    mu = 2.0 * p.lam
    if expensive and p.kind is LossKind.RIDGE:
        eig_min = float(np.linalg.eigvalsh(p.A.T @ p.A)[0])
        mu += 2.0 * max(eig_min, 0.0) / p.n
    if mu <= 0:
        raise ValueError("not strongly convex under cheap bound (lam = 0)")
    return SmoothnessConstants(L=max(L, mu), mu=mu)


def solve_reference(p: Problem, tol: float = 1e-13, max_iter: int = 100) -> np.ndarray:
    """Minimizer of the objective: direct solve for ridge, Newton for logistic."""
    A, b, n, lam = p.A, p.b, p.n, p.lam
    if p.kind is LossKind.RIDGE:
        H = A.T @ A / n + lam * np.eye(p.d)
        return np.linalg.solve(H, A.T @ b / n)
    x = np.zeros(p.d)
    g0 = np.linalg.norm(full_gradient(p, x))
    for _ in range(max_iter):
        g = full_gradient(p, x)
        if np.linalg.norm(g) <= tol * max(g0, 1.0):
            break
        s = sigmoid(b * (A @ x))
        w = b * b * s * (1.0 - s)
        H = (A.T * w) @ A / n + 2.0 * lam * np.eye(p.d)
        step = np.linalg.solve(H, g)
        t = 1.0
        if np.linalg.norm(g) > 1e-6 * max(g0, 1.0):
            # backtrack while far away; near the optimum rounding defeats Armijo
            f0 = objective(p, x)
            while t > 1e-10 and objective(p, x - t * step) > f0 - 0.25 * t * float(g @ step):
                t *= 0.5
        x = x - t * step
    return x
