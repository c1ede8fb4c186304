"""Per-epoch convergence records and their CSV/JSON export."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import problems
from .problems import Problem

DIVERGENCE_NORM = 1e10

COLUMNS = ("epoch", "grad_evals", "rel_grad_norm", "suboptimality", "virtual_time", "wall_time_s")


class DivergenceError(RuntimeError):
    """Raised when an iterate blows up; carries the trace recorded so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


@dataclass(frozen=True)
class TraceRecord:
    epoch: int
    grad_evals: int
    rel_grad_norm: float
    suboptimality: float
    virtual_time: float
    wall_time_s: float

    def as_dict(self) -> dict:
        return asdict(self)


class Tracker:
    """Computes metrics on the full dataset without touching optimizer state.

    Full-gradient evaluations spent on metrics are counted in ``metric_evals``,
    apart from the optimizer's own gradient ledger.
    """

    def __init__(self, p: Problem, x0, x_star=None, tol=None, wall_clock=True):
        self.p = p
        self.x_star = None if x_star is None else np.asarray(x_star, dtype=np.float64)
        self.f_star = None if x_star is None else problems.objective(p, self.x_star)
        self.tol = tol
        self.wall_clock = wall_clock
        self.metric_evals = 0
        self.records: list[TraceRecord] = []
        self._t0 = time.perf_counter()
        self.g0 = float(np.linalg.norm(self._grad(x0)))

    def _grad(self, x):
        self.metric_evals += self.p.n
        return problems.full_gradient(self.p, x)

    def record(self, epoch, x, grad_evals, virtual_time) -> TraceRecord:
        x = np.asarray(x)
        if not np.all(np.isfinite(x)) or float(np.linalg.norm(x)) > DIVERGENCE_NORM:
            raise DivergenceError(f"iterate diverged at epoch {epoch} (||x|| > {DIVERGENCE_NORM:g})", self.records)
        if epoch == 0:
            rel = 1.0
        else:
            gnorm = float(np.linalg.norm(self._grad(x)))
            rel = gnorm / self.g0 if self.g0 > 0 else 0.0
        sub = math.nan if self.x_star is None else problems.objective(self.p, x) - self.f_star
        wall = time.perf_counter() - self._t0 if self.wall_clock else 0.0
        rec = TraceRecord(int(epoch), int(grad_evals), rel, float(sub), float(virtual_time), wall)
        self.records.append(rec)
        return rec

    def converged(self) -> bool:
        return self.tol is not None and bool(self.records) and self.records[-1].rel_grad_norm <= self.tol


def check_finite(x, epoch, tracker: Tracker):
    if not np.all(np.isfinite(x)) or float(np.linalg.norm(x)) > DIVERGENCE_NORM:
        raise DivergenceError(f"iterate diverged at epoch {epoch} (||x|| > {DIVERGENCE_NORM:g})", tracker.records)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def export_trace(records, fmt, path) -> None:
    """Write records as CSV (fixed header) or as a JSON array of objects."""
    records = list(records)
    if not records:
        raise ValueError("no trace records to export")
    fmt = str(fmt).lower()
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in records:
                w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
    elif fmt == "json":
        payload = [{c: getattr(r, c) for c in COLUMNS} for r in records]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1, allow_nan=True)
            fh.write("\n")
    else:
        raise ValueError(f"unknown trace format {fmt!r}")


def load_trace(path) -> list[TraceRecord]:
    """Read back a trace written by :func:`export_trace`."""
    path = str(path)
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            rows = json.load(fh)
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    types = {f.name: f.type for f in fields(TraceRecord)}
    out = []
    for row in rows:
        out.append(TraceRecord(**{k: (int(row[k]) if types[k] in (int, "int") else float(row[k])) for k in COLUMNS}))
    return out
