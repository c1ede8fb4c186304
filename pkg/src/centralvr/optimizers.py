"""Single-worker optimizers: SGD, SVRG, SAGA and CentralVR.

The three variance-reduced methods step along a corrected gradient::

    v = grad f_i(x) - stored_i + avg

where ``stored_i`` is the most recent gradient of sample ``i`` held in a
:class:`GradientTable` and ``avg`` is the table average (SAGA, CentralVR) or
the full gradient at a snapshot point (SVRG). They differ in when ``avg`` is
refreshed: SAGA after every step, CentralVR once per epoch, SVRG once per
snapshot period.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels, rng
from .problems import Problem, component_gradients, loss_gradient
from .trace import Tracker, TraceRecord

NO_ROWS = np.zeros((0, 1))


class Sampling(str, enum.Enum):
    UNIFORM = "uniform"
    PERMUTATION = "permutation"


class StorageMode(str, enum.Enum):
    FULL_VECTOR = "full"
    SCALAR_COMPACT = "compact"


@dataclass(frozen=True)
class OptConfig:
    eta: float
    epochs: int = 30
    sampling: Sampling = Sampling.PERMUTATION
    seed: int = 0
    svrg_snapshot_period: int = 2
    storage: StorageMode = StorageMode.FULL_VECTOR
    tol: float | None = None  # stop once rel_grad_norm <= tol
    wall_clock: bool = True  # False writes 0.0 wall times for byte-stable traces

    def __post_init__(self):
        object.__setattr__(self, "sampling", Sampling(self.sampling))
        object.__setattr__(self, "storage", StorageMode(self.storage))
        if not (np.isfinite(self.eta) and self.eta >= 0):
            raise ValueError(f"eta must be a finite nonnegative step size, got {self.eta}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.svrg_snapshot_period < 1:
            raise ValueError("svrg_snapshot_period must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass
class GradientTable:
    """Most recent gradient per sample plus the table average.

    In compact mode only the scalar ``c_j`` is kept per sample; both the stored
    record and ``avg`` then exclude the regularizer, whose gradient the
    optimizers apply exactly at the current iterate.
    """

    mode: StorageMode
    stored: np.ndarray
    avg: np.ndarray
    features: np.ndarray = field(repr=False)
    initialized: bool = False

    @classmethod
    def empty(cls, p: Problem, mode=StorageMode.FULL_VECTOR) -> "GradientTable":
        mode = StorageMode(mode)
        shape = (p.n, p.d) if mode is StorageMode.FULL_VECTOR else (p.n,)
        return cls(mode, np.zeros(shape), np.zeros(p.d), p.A)

    @classmethod
    def from_points(cls, p: Problem, points, mode=StorageMode.FULL_VECTOR) -> "GradientTable":
        """Table whose entry ``j`` is the gradient of sample ``j`` at ``points[j]``."""
        t = cls.empty(p, mode)
        points = np.asarray(points, dtype=np.float64)
        coeffs = np.array([_kernels.coeff(p.kind.code, p.A[j], p.b[j], points[j]) for j in range(p.n)])
        if t.mode is StorageMode.FULL_VECTOR:
            t.stored[:] = coeffs[:, None] * p.A + 2.0 * p.lam * points
        else:
            t.stored[:] = coeffs
        t.rebuild_avg()
        return t

    @property
    def n(self) -> int:
        return self.stored.shape[0]

    def record(self, j: int) -> np.ndarray:
        if self.mode is StorageMode.FULL_VECTOR:
            return self.stored[j]
        return self.stored[j] * self.features[j]

    def rebuild_avg(self) -> None:
        if self.mode is StorageMode.FULL_VECTOR:
            self.avg = self.stored.sum(axis=0) / self.n
        else:
            self.avg = (self.stored[:, None] * self.features).sum(axis=0) / self.n
        self.initialized = True


def corrected_gradient(table: GradientTable, p: Problem, x, i: int) -> np.ndarray:
    """Variance-reduced direction ``grad f_i(x) - stored_i + avg``; leaves the table alone."""
    if not table.initialized:
        raise ValueError("gradient table is not initialized")
    return loss_gradient(p, x, i) - table.record(i) + table.avg


def corrected_gradients(table: GradientTable, p: Problem, x) -> np.ndarray:
    """All ``n`` corrected directions at ``x`` as rows, same values as :func:`corrected_gradient`."""
    if not table.initialized:
        raise ValueError("gradient table is not initialized")
    records = table.stored if table.mode is StorageMode.FULL_VECTOR else table.stored[:, None] * table.features
    return component_gradients(p, x) - records + table.avg[None, :]


@dataclass
class RunResult:
    x: np.ndarray
    trace: list[TraceRecord]
    table: GradientTable | None = None
    metric_evals: int = 0
    stats: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EpochInfo:
    """Snapshot handed to ``run_centralvr`` callbacks after each epoch."""

    epoch: int
    x_start: np.ndarray
    x_end: np.ndarray
    order: np.ndarray
    iterates: np.ndarray  # pre-update iterate of every step
    table: GradientTable


def permutation(n: int, seed: int, epoch: int = 0) -> np.ndarray:
    return rng.permutation(n, seed, epoch)


def epoch_order(n: int, cfg: OptConfig, epoch: int, worker: int = 0, count: int | None = None) -> np.ndarray:
    if cfg.sampling is Sampling.PERMUTATION:
        return rng.permutation(n, cfg.seed, epoch, worker)
    return rng.uniform_indices(n, n if count is None else count, cfg.seed, epoch, worker)


def _start(p: Problem, x0) -> np.ndarray:
    x = np.zeros(p.d) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (p.d,):
        raise ValueError(f"x0 must have shape ({p.d},)")
    return x


def fill_table(p: Problem, table: GradientTable, x, eta, order, denom, record=NO_ROWS) -> np.ndarray:
    """Plain SGD pass that writes every visited gradient into ``table``.

    Returns the visited gradients summed and divided by ``denom``.
    """
    k = p.kind.code
    if table.mode is StorageMode.FULL_VECTOR:
        return _kernels.sgd_epoch(p.A, p.b, k, p.lam, x, eta, order, table.stored, denom, record)
    return _kernels.sgd_epoch_compact(p.A, p.b, k, p.lam, x, eta, order, table.stored, denom)


def run_sgd(p: Problem, cfg: OptConfig, x0=None, x_star=None) -> RunResult:
    x = _start(p, x0)
    tracker = Tracker(p, x, x_star, cfg.tol, cfg.wall_clock)
    tracker.record(0, x, 0, 0.0)
    evals = 0
    for epoch in range(1, cfg.epochs + 1):
        order = epoch_order(p.n, cfg, epoch)
        _kernels.sgd_epoch(p.A, p.b, p.kind.code, p.lam, x, cfg.eta, order, NO_ROWS, 1.0, NO_ROWS)
        evals += order.shape[0]
        tracker.record(epoch, x, evals, float(evals))
        if tracker.converged():
            break
    return RunResult(x, tracker.records, metric_evals=tracker.metric_evals)


def run_centralvr(
    p: Problem,
    cfg: OptConfig,
    x0=None,
    x_star=None,
    callback: Callable[[EpochInfo], None] | None = None,
) -> RunResult:
    """CentralVR, one worker.

    Epoch 1 is a plain SGD pass (in permutation order, so every slot of the
    table gets filled) at the same step size. Each later epoch steps along the
    corrected gradient with the average frozen, then replaces the average with
    the mean of the gradients computed during the epoch. Under uniform sampling
    the replacement is the mean of the whole table instead, which is what the
    unbiasedness argument needs when some samples were not visited.
    """
    x = _start(p, x0)
    n, k = p.n, p.kind.code
    table = GradientTable.empty(p, cfg.storage)
    record = np.empty((n, p.d)) if callback else NO_ROWS
    tracker = Tracker(p, x, x_star, cfg.tol, cfg.wall_clock)
    tracker.record(0, x, 0, 0.0)

    x_start = x.copy()
    order = rng.permutation(n, cfg.seed, 1)
    table.avg = fill_table(p, table, x, cfg.eta, order, float(n), record)
    table.initialized = True
    evals = n
    if callback:
        callback(EpochInfo(1, x_start, x.copy(), order, record.copy(), table))
    tracker.record(1, x, evals, float(evals))

    for epoch in range(2, cfg.epochs + 1):
        if tracker.converged():
            break
        order = epoch_order(n, cfg, epoch)
        x_start = x.copy() if callback else None
        if table.mode is StorageMode.FULL_VECTOR:
            rec = record if callback else NO_ROWS
            acc = _kernels.centralvr_epoch(p.A, p.b, k, p.lam, x, table.stored, table.avg, cfg.eta, order, float(n), rec)
        else:
            acc = _kernels.centralvr_epoch_compact(p.A, p.b, k, p.lam, x, table.stored, table.avg, cfg.eta, order, float(n))
        if cfg.sampling is Sampling.PERMUTATION:
            table.avg = acc
        else:
            table.rebuild_avg()
        evals += order.shape[0]
        if callback:
            callback(EpochInfo(epoch, x_start, x.copy(), order, record.copy(), table))
        tracker.record(epoch, x, evals, float(evals))
    return RunResult(x, tracker.records, table, tracker.metric_evals)


def run_saga(p: Problem, cfg: OptConfig, x0=None, x_star=None) -> RunResult:
    """SAGA with the same SGD initialization epoch as CentralVR."""
    x = _start(p, x0)
    n, k = p.n, p.kind.code
    table = GradientTable.empty(p, cfg.storage)
    tracker = Tracker(p, x, x_star, cfg.tol, cfg.wall_clock)
    tracker.record(0, x, 0, 0.0)

    table.avg = fill_table(p, table, x, cfg.eta, rng.permutation(n, cfg.seed, 1), float(n))
    table.initialized = True
    evals = n
    tracker.record(1, x, evals, float(evals))
    for epoch in range(2, cfg.epochs + 1):
        if tracker.converged():
            break
        order = epoch_order(n, cfg, epoch)
        if table.mode is StorageMode.FULL_VECTOR:
            _kernels.saga_epoch(p.A, p.b, k, p.lam, x, table.stored, table.avg, cfg.eta, order, float(n))
        else:
            _kernels.saga_epoch_compact(p.A, p.b, k, p.lam, x, table.stored, table.avg, cfg.eta, order, float(n))
        evals += order.shape[0]
        tracker.record(epoch, x, evals, float(evals))
    return RunResult(x, tracker.records, table, tracker.metric_evals)


def run_svrg(p: Problem, cfg: OptConfig, x0=None, x_star=None) -> RunResult:
    """SVRG; the snapshot is refreshed every ``svrg_snapshot_period`` epochs.

    A snapshot costs ``n`` gradient evaluations, each inner step two.
    """
    x = _start(p, x0)
    n, k = p.n, p.kind.code
    tracker = Tracker(p, x, x_star, cfg.tol, cfg.wall_clock)
    tracker.record(0, x, 0, 0.0)
    evals = 0
    snap = snap_grad = None
    for epoch in range(1, cfg.epochs + 1):
        if (epoch - 1) % cfg.svrg_snapshot_period == 0:
            snap = x.copy()
            snap_grad = _kernels.grad_sum(p.A, p.b, k, p.lam, snap) / n
            evals += n
        order = epoch_order(n, cfg, epoch)
        _kernels.svrg_inner(p.A, p.b, k, p.lam, x, snap, snap_grad, cfg.eta, order)
        evals += 2 * order.shape[0]
        tracker.record(epoch, x, evals, float(evals))
        if tracker.converged():
            break
    return RunResult(x, tracker.records, metric_evals=tracker.metric_evals)


SEQUENTIAL = {
    "sgd": run_sgd,
    "svrg": run_svrg,
    "saga": run_saga,
    "centralvr": run_centralvr,
}
