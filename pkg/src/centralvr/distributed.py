"""Virtual-clock simulation of a central server and ``p`` workers.

Workers hold disjoint shards of the data and talk only to the server. Time is
simulated: a worker spends ``speed_factor`` virtual seconds per gradient
evaluation and every message leg costs ``comm_latency``. Events are processed
in ``(time, worker id, sequence number)`` order, so asynchronous interleavings
are reproducible.

Algorithms:

* CentralVR-Sync: every worker runs one local CentralVR epoch from the
  broadcast ``(x, gbar)``; the server averages the returned pairs.
* CentralVR-Async: workers run local epochs at their own pace and send the
  change ``(dx, dgbar)`` since their previous message; the server adds
  ``alpha`` times the change and replies with its current state.
* Distributed SVRG: a synchronized full gradient at the averaged iterate,
  then ``tau`` local SVRG steps per worker and an averaging step.
* Asynchronous SAGA: ``tau`` local SAGA steps with the average refreshed at
  weight ``1/n`` (global ``n``), then a delta exchange as in CentralVR-Async.
  The average's delta is the worker's own table change (its value minus the
  value it received) and the server adds it at weight 1, so the server
  average tracks the mean of all stored gradients.
* Local SGD: CentralVR-Sync without the correction, for comparison.

The algorithms with gradient tables start with one synchronized round of
plain SGD that fills every worker's table.
"""
from __future__ import annotations

import enum
import heapq
import math
import queue
import threading
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, rng
from .data import PartitionStrategy, Shard, partition
from .optimizers import (
    NO_ROWS,
    GradientTable,
    OptConfig,
    RunResult,
    Sampling,
    StorageMode,
    epoch_order,
    fill_table,
)
from .problems import Problem
from .trace import Tracker, check_finite


class Mode(str, enum.Enum):
    SYNC = "sync"
    ASYNC = "async"


class Weighting(str, enum.Enum):
    UNIFORM = "uniform"
    SIZE = "size"


class EventKind(enum.IntEnum):
    WORKER_DONE = 0
    SERVER_REPLY = 1
    BARRIER = 2


@dataclass(frozen=True)
class ClusterConfig:
    p: int = 1
    tau: int | None = None
    speed_factors: tuple | None = None  # virtual seconds per gradient evaluation
    comm_latency: float = 0.0
    mode: Mode | None = None  # inferred from the algorithm when None
    alpha: float | None = None  # server mixing weight, 1/p when None
    seed: int = 0
    partition: PartitionStrategy = PartitionStrategy.CONTIGUOUS
    weighting: Weighting = Weighting.UNIFORM
    # literal delta rules: x_old, gbar_old start at zero, and async SAGA sends
    # its average relative to the previous message at weight alpha
    strict_paper: bool = False

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.tau is not None and self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if self.speed_factors is not None:
            sf = tuple(float(s) for s in self.speed_factors)
            if len(sf) != self.p:
                raise ValueError(f"need {self.p} speed factors, got {len(sf)}")
            if not all(s > 0 and math.isfinite(s) for s in sf):
                raise ValueError("speed factors must be positive")
            object.__setattr__(self, "speed_factors", sf)
        if not (self.comm_latency >= 0 and math.isfinite(self.comm_latency)):
            raise ValueError("comm_latency must be >= 0")
        if self.alpha is not None and not (0 < self.alpha <= 1):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.mode is not None:
            object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "partition", PartitionStrategy(self.partition))
        object.__setattr__(self, "weighting", Weighting(self.weighting))

    @property
    def speeds(self) -> tuple:
        return self.speed_factors if self.speed_factors is not None else (1.0,) * self.p


@dataclass(frozen=True, order=True)
class SimEvent:
    time: float
    worker: int
    seq: int
    kind: EventKind = field(compare=False)
    payload: tuple = field(compare=False, default=(), repr=False)


class EventQueue:
    """Priority queue keyed on ``(time, worker, per-worker sequence)``."""

    def __init__(self):
        self._heap: list[SimEvent] = []
        self._seq: dict[int, int] = {}
        self.now = 0.0
        self.log: list[tuple] = []

    def push(self, time: float, worker: int, kind: EventKind, payload=()) -> SimEvent:
        if time < self.now:
            raise ValueError("cannot schedule an event in the past")
        seq = self._seq.get(worker, 0)
        self._seq[worker] = seq + 1
        ev = SimEvent(float(time), worker, seq, kind, payload)
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> SimEvent:
        ev = heapq.heappop(self._heap)
        self.now = ev.time
        self.log.append((ev.time, ev.worker, ev.seq, ev.kind.name))
        return ev

    def __len__(self):
        return len(self._heap)


@dataclass
class WorkerState:
    id: int
    shard: Shard
    problem: Problem  # the shard's rows only
    speed: float
    x: np.ndarray
    table: GradientTable | None = None
    gbar: np.ndarray | None = None
    x_old: np.ndarray | None = None
    g_old: np.ndarray | None = None
    blocks: int = 0  # local passes started; keys the sampling stream
    updates: int = 0  # deltas applied at the server
    messages: int = 0


@dataclass
class ServerState:
    x: np.ndarray
    gbar: np.ndarray
    updates: int = 0
    x_init: np.ndarray | None = None
    g_init: np.ndarray | None = None
    dx_sum: np.ndarray | None = None
    dg_sum: np.ndarray | None = None
    g_weight: float | None = None  # fixed weight on gbar deltas, alpha when None

    def reset_origin(self):
        self.x_init = self.x.copy()
        self.g_init = self.gbar.copy()
        self.dx_sum = np.zeros_like(self.x)
        self.dg_sum = np.zeros_like(self.gbar)

    def apply(self, dx, dg, alpha):
        self.x += alpha * dx
        self.gbar += (alpha if self.g_weight is None else self.g_weight) * dg
        self.dx_sum += dx
        self.dg_sum += dg
        self.updates += 1


class Cluster:
    """Shards, worker states and the shared clock for one simulated run."""

    def __init__(self, prob: Problem, cluster: ClusterConfig, cfg: OptConfig, x0=None, x_star=None):
        self.prob = prob
        self.cc = cluster
        self.cfg = cfg
        self.shards = partition(prob.data, cluster.p, cluster.partition, cluster.seed)
        self.workers = []
        for shard, speed in zip(self.shards, cluster.speeds):
            if shard.local_count == 0:
                raise ValueError(f"worker {shard.owner} has an empty shard")
            local = Problem(prob.kind, prob.data.subset(shard.indices), prob.lam)
            self.workers.append(WorkerState(shard.owner, shard, local, speed, np.zeros(prob.d)))
        x = np.zeros(prob.d) if x0 is None else np.array(x0, dtype=np.float64)
        if x.shape != (prob.d,):
            raise ValueError(f"x0 must have shape ({prob.d},)")
        self.server = ServerState(x, np.zeros(prob.d))
        self.sim = EventQueue()
        self.tracker = Tracker(prob, x, x_star, cfg.tol, cfg.wall_clock)
        self.evals = 0
        self.epoch = 0
        self.tracker.record(0, x, 0, 0.0)

    @property
    def p(self) -> int:
        return self.cc.p

    @property
    def latency(self) -> float:
        return self.cc.comm_latency

    def weights(self) -> list[float]:
        if self.cc.weighting is Weighting.SIZE:
            return [w.shard.local_count / self.prob.n for w in self.workers]
        return [1.0 / self.p] * self.p

    def alphas(self) -> list[float]:
        if self.cc.alpha is not None:
            return [self.cc.alpha] * self.p
        return self.weights()

    def record(self):
        self.epoch += 1
        self.tracker.record(self.epoch, self.server.x, self.evals, self.sim.now)

    def done(self) -> bool:
        return self.epoch >= self.cfg.epochs or self.tracker.converged()

    def sync_round(self, work):
        """One barrier round.

        ``work(worker)`` runs the worker's local computation and returns
        ``(gradient_evals, payload)``. Payloads are gathered in worker order.
        """
        t0 = self.sim.now
        for w in self.workers:
            cost, payload = work(w)
            self.evals += cost
            w.messages += 1
            self.sim.push(t0 + w.speed * cost + self.latency, w.id, EventKind.WORKER_DONE, payload)
        arrived = {}
        while len(arrived) < self.p:
            ev = self.sim.pop()
            arrived[ev.worker] = ev.payload
        self.sim.push(self.sim.now, self.p, EventKind.BARRIER)
        self.sim.pop()
        payloads = [arrived[w.id] for w in self.workers]
        return payloads

    def broadcast(self):
        t = self.sim.now + self.latency
        for w in self.workers:
            w.messages += 1
            self.sim.push(t, w.id, EventKind.SERVER_REPLY)
        for _ in self.workers:
            self.sim.pop()

    def average(self, vectors):
        acc = np.zeros(self.prob.d)
        for wt, v in zip(self.weights(), vectors):
            acc += wt * v
        return acc

    def result(self, **extra) -> RunResult:
        stats = {
            "messages": sum(w.messages for w in self.workers),
            "messages_per_worker": [w.messages for w in self.workers],
            "updates_per_worker": [w.updates for w in self.workers],
            "blocks_per_worker": [w.blocks for w in self.workers],
            "server_updates": self.server.updates,
            "virtual_time": self.sim.now,
            "events": len(self.sim.log),
            "event_log": self.sim.log,
        }
        stats.update(extra)
        return RunResult(self.server.x.copy(), self.tracker.records, None, self.tracker.metric_evals, stats)

    def check(self, x):
        check_finite(x, self.epoch, self.tracker)


def _check_mode(cluster: ClusterConfig, want: Mode):
    if cluster.mode is not None and cluster.mode is not want:
        raise ValueError(f"this algorithm runs in {want.value} mode, cluster says {cluster.mode.value}")


def _local_mean(w: WorkerState, acc, cfg: OptConfig):
    if cfg.sampling is Sampling.PERMUTATION:
        return acc
    w.table.rebuild_avg()
    return w.table.avg.copy()


def _init_tables(c: Cluster, denom_global: bool):
    """Synchronized plain-SGD round filling each worker's table.

    Returns the averaged iterate and the list of local gradient averages. With
    ``denom_global`` the local sums are divided by the global ``n``.
    """
    cfg = c.cfg

    def work(w):
        w.blocks = 1
        w.x = c.server.x.copy()
        w.table = GradientTable.empty(w.problem, cfg.storage)
        order = rng.permutation(w.shard.local_count, cfg.seed, 1, w.id)
        denom = float(c.prob.n if denom_global else w.shard.local_count)
        w.gbar = fill_table(w.problem, w.table, w.x, cfg.eta, order, denom)
        w.table.initialized = True
        c.check(w.x)
        return order.shape[0], (w.x.copy(), w.gbar.copy())

    payloads = c.sync_round(work)
    return c.average([x for x, _ in payloads]), [g for _, g in payloads]


def _cvr_local_epoch(w: WorkerState, gbar, cfg: OptConfig, record=NO_ROWS):
    """One local CentralVR pass from ``w.x`` with the server average ``gbar``."""
    prob = w.problem
    m = w.shard.local_count
    order = epoch_order(m, cfg, w.blocks, w.id)
    if w.table.mode is StorageMode.FULL_VECTOR:
        acc = _kernels.centralvr_epoch(prob.A, prob.b, prob.kind.code, prob.lam, w.x, w.table.stored, gbar, cfg.eta, order, float(m), record)
    else:
        acc = _kernels.centralvr_epoch_compact(prob.A, prob.b, prob.kind.code, prob.lam, w.x, w.table.stored, gbar, cfg.eta, order, float(m))
    w.gbar = _local_mean(w, acc, cfg)
    return order.shape[0]


def run_centralvr_sync(prob: Problem, cluster: ClusterConfig, cfg: OptConfig, x0=None, x_star=None) -> RunResult:
    _check_mode(cluster, Mode.SYNC)
    c = Cluster(prob, cluster, cfg, x0, x_star)
    x, gbars = _init_tables(c, denom_global=False)
    c.server.x, c.server.gbar = x, c.average(gbars)
    c.broadcast()
    c.record()
    while not c.done():
        def work(w):
            w.blocks += 1
            w.x = c.server.x.copy()
            evals = _cvr_local_epoch(w, c.server.gbar.copy(), cfg)
            c.check(w.x)
            return evals, (w.x.copy(), w.gbar.copy())

        payloads = c.sync_round(work)
        c.server.x = c.average([x for x, _ in payloads])
        c.server.gbar = c.average([g for _, g in payloads])
        c.broadcast()
        c.record()
    return c.result()


def run_local_sgd_baseline(prob: Problem, cluster: ClusterConfig, cfg: OptConfig, x0=None, x_star=None) -> RunResult:
    """Local SGD epochs followed by server averaging of the iterates."""
    _check_mode(cluster, Mode.SYNC)
    c = Cluster(prob, cluster, cfg, x0, x_star)
    while not c.done():
        def work(w):
            w.blocks += 1
            w.x = c.server.x.copy()
            lp = w.problem
            order = epoch_order(w.shard.local_count, cfg, w.blocks, w.id)
            _kernels.sgd_epoch(lp.A, lp.b, lp.kind.code, lp.lam, w.x, cfg.eta, order, NO_ROWS, 1.0, NO_ROWS)
            c.check(w.x)
            return order.shape[0], w.x.copy()

        c.server.x = c.average(c.sync_round(work))
        c.broadcast()
        c.record()
    return c.result()


def run_dist_svrg(prob: Problem, cluster: ClusterConfig, cfg: OptConfig, x0=None, x_star=None) -> RunResult:
    """Synchronous distributed SVRG.

    Each round costs one reduction (shard gradient sums up, full gradient down)
    and one ``tau``-block exchange, i.e. four messages per worker.
    """
    _check_mode(cluster, Mode.SYNC)
    c = Cluster(prob, cluster, cfg, x0, x_star)
    tau = cluster.tau if cluster.tau is not None else 2 * math.ceil(prob.n / cluster.p)
    snapshots = []
    while not c.done():
        snap = c.server.x.copy()

        def reduce(w):
            lp = w.problem
            return w.shard.local_count, _kernels.grad_sum(lp.A, lp.b, lp.kind.code, lp.lam, snap)

        sums = c.sync_round(reduce)
        total = np.zeros(prob.d)
        for s in sums:
            total += s
        snap_grad = total / prob.n
        snapshots.append(snap_grad)
        c.broadcast()

        def work(w):
            w.blocks += 1
            w.x = snap.copy()
            lp = w.problem
            order = rng.uniform_indices(w.shard.local_count, tau, cfg.seed, w.blocks, w.id)
            _kernels.svrg_inner(lp.A, lp.b, lp.kind.code, lp.lam, w.x, snap, snap_grad, cfg.eta, order)
            c.check(w.x)
            return 2 * tau, w.x.copy()

        c.server.x = c.average(c.sync_round(work))
        c.broadcast()
        c.record()
    return c.result(tau=tau, last_snapshot_grad=snapshots[-1] if snapshots else None)


def _run_async(c: Cluster, block, first_gbar, increment=False):
    """Drive delta exchanges until the epoch budget or tolerance is reached.

    ``block(worker, gbar)`` runs one local pass from ``worker.x`` and returns
    ``(gradient_evals, new_local_gbar)``. With ``increment`` the gbar delta is
    taken against the received value and applied at weight 1. A trace record
    is written each time another ``n`` gradient evaluations have been applied
    at the server.
    """
    alphas = c.alphas()
    c.server.reset_origin()
    if increment:
        c.server.g_weight = 1.0
    for w in c.workers:
        if c.cc.strict_paper:
            w.x_old = np.zeros(c.prob.d)
            w.g_old = np.zeros(c.prob.d)
        else:
            w.x_old = c.server.x.copy()
            w.g_old = first_gbar.copy()

    def start(w, x, gbar):
        w.blocks += 1
        w.x = x.copy()
        evals, g_new = block(w, gbar.copy())
        c.check(w.x)
        dx = w.x - w.x_old
        dg = g_new - (gbar if increment else w.g_old)
        w.x_old = w.x.copy()
        w.g_old = g_new.copy()
        w.messages += 1
        c.sim.push(c.sim.now + w.speed * evals + c.latency, w.id, EventKind.WORKER_DONE, (dx, dg, evals))

    for w in c.workers:
        start(w, c.server.x, c.server.gbar)
    next_record = c.evals + c.prob.n
    while not c.done():
        ev = c.sim.pop()
        w = c.workers[ev.worker]
        if ev.kind is EventKind.WORKER_DONE:
            dx, dg, evals = ev.payload
            c.server.apply(dx, dg, alphas[w.id])
            c.evals += evals
            w.updates += 1
            w.messages += 1
            c.sim.push(c.sim.now + c.latency, w.id, EventKind.SERVER_REPLY, (c.server.x.copy(), c.server.gbar.copy()))
            if c.evals >= next_record:
                c.record()
                next_record = c.evals + c.prob.n
        else:
            x, gbar = ev.payload
            start(w, x, gbar)


def run_centralvr_async(prob: Problem, cluster: ClusterConfig, cfg: OptConfig, x0=None, x_star=None) -> RunResult:
    _check_mode(cluster, Mode.ASYNC)
    c = Cluster(prob, cluster, cfg, x0, x_star)
    x, gbars = _init_tables(c, denom_global=False)
    c.server.x, c.server.gbar = x, c.average(gbars)
    c.broadcast()
    c.record()

    def block(w, gbar):
        evals = _cvr_local_epoch(w, gbar, cfg)
        return evals, w.gbar

    _run_async(c, block, c.server.gbar)
    return c.result(conservation=_conservation(c))


def run_async_saga(prob: Problem, cluster: ClusterConfig, cfg: OptConfig, x0=None, x_star=None) -> RunResult:
    """Asynchronous SAGA. Local steps sample the worker's shard with replacement."""
    _check_mode(cluster, Mode.ASYNC)
    c = Cluster(prob, cluster, cfg, x0, x_star)
    tau = cluster.tau if cluster.tau is not None else math.ceil(prob.n / cluster.p)
    x, sums = _init_tables(c, denom_global=True)
    total = np.zeros(prob.d)
    for s in sums:
        total += s
    c.server.x, c.server.gbar = x, total
    c.broadcast()
    c.record()
    drift = []  # first few blocks, for checking the local average bookkeeping

    def block(w, gbar):
        lp = w.problem
        order = rng.uniform_indices(w.shard.local_count, tau, cfg.seed, w.blocks, w.id)
        keep = len(drift) < 4
        if keep:
            g_recv, before = gbar.copy(), w.table.stored.copy()
        if w.table.mode is StorageMode.FULL_VECTOR:
            _kernels.saga_epoch(lp.A, lp.b, lp.kind.code, lp.lam, w.x, w.table.stored, gbar, cfg.eta, order, float(prob.n))
        else:
            _kernels.saga_epoch_compact(lp.A, lp.b, lp.kind.code, lp.lam, w.x, w.table.stored, gbar, cfg.eta, order, float(prob.n))
        if keep:
            drift.append((w.id, g_recv, before, w.table.stored.copy(), gbar.copy()))
        w.gbar = gbar
        return tau, gbar

    _run_async(c, block, c.server.gbar, increment=not cluster.strict_paper)
    return c.result(tau=tau, conservation=_conservation(c), gbar_drift=drift)


def _conservation(c: Cluster):
    """Server state against its origin plus alpha times the applied deltas."""
    alphas = set(c.alphas())
    if len(alphas) != 1 or c.server.dx_sum is None:
        return None
    a = alphas.pop()
    ag = a if c.server.g_weight is None else c.server.g_weight
    return {
        "x_error": float(np.max(np.abs(c.server.x - (c.server.x_init + a * c.server.dx_sum)))),
        "g_error": float(np.max(np.abs(c.server.gbar - (c.server.g_init + ag * c.server.dg_sum)))),
    }


DISTRIBUTED = {
    "centralvr-sync": run_centralvr_sync,
    "centralvr-async": run_centralvr_async,
    "dist-svrg": run_dist_svrg,
    "async-saga": run_async_saga,
    "local-sgd": run_local_sgd_baseline,
}

MODES = {
    "centralvr-sync": Mode.SYNC,
    "centralvr-async": Mode.ASYNC,
    "dist-svrg": Mode.SYNC,
    "async-saga": Mode.ASYNC,
    "local-sgd": Mode.SYNC,
}


class RoundRobin:
    """Forces threaded workers to reach the server in worker-id order."""

    def __init__(self, p: int):
        self.p = p
        self.turn = 0
        self.cond = threading.Condition()

    def wait(self, wid: int):
        with self.cond:
            self.cond.wait_for(lambda: self.turn == wid)

    def release(self):
        with self.cond:
            self.turn = (self.turn + 1) % self.p
            self.cond.notify_all()


def run_centralvr_async_threaded(
    prob: Problem,
    cluster: ClusterConfig,
    cfg: OptConfig,
    blocks_per_worker: int,
    x0=None,
    sequencer: RoundRobin | None = None,
) -> RunResult:
    """CentralVR-Async on real threads: one per worker plus one server thread.

    The server thread owns ``(x, gbar)`` and serves one exchange at a time
    from a request queue, so every update is applied whole. Without a
    sequencer the interleaving is up to the OS scheduler.
    """
    _check_mode(cluster, Mode.ASYNC)
    c = Cluster(prob, cluster, cfg, x0)
    x, gbars = _init_tables(c, denom_global=False)
    c.server.x, c.server.gbar = x, c.average(gbars)
    c.server.reset_origin()
    alphas = c.alphas()
    requests: queue.Queue = queue.Queue()
    order_log: list[int] = []
    errors: list[BaseException] = []

    def server():
        while True:
            item = requests.get()
            if item is None:
                return
            wid, dx, dg, reply = item
            c.server.apply(dx, dg, alphas[wid])
            c.workers[wid].updates += 1
            order_log.append(wid)
            reply.put((c.server.x.copy(), c.server.gbar.copy()))

    def worker(w: WorkerState, x_start, g_start):
        try:
            reply: queue.Queue = queue.Queue(maxsize=1)
            x_cur, g_cur = x_start.copy(), g_start.copy()
            w.x_old = np.zeros(prob.d) if cluster.strict_paper else x_start.copy()
            w.g_old = np.zeros(prob.d) if cluster.strict_paper else g_start.copy()
            for _ in range(blocks_per_worker):
                w.blocks += 1
                w.x = x_cur
                _cvr_local_epoch(w, g_cur.copy(), cfg)
                dx, dg = w.x - w.x_old, w.gbar - w.g_old
                w.x_old, w.g_old = w.x.copy(), w.gbar.copy()
                if sequencer:
                    sequencer.wait(w.id)
                requests.put((w.id, dx, dg, reply))
                x_cur, g_cur = reply.get()
                if sequencer:
                    sequencer.release()
                w.messages += 2
        except BaseException as exc:  # surfaced after join
            errors.append(exc)

    srv = threading.Thread(target=server, name="server")
    srv.start()
    threads = [
        threading.Thread(target=worker, args=(w, c.server.x.copy(), c.server.gbar.copy()), name=f"worker-{w.id}")
        for w in c.workers
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    requests.put(None)
    srv.join()
    if errors:
        raise errors[0]
    return c.result(order=order_log, conservation=_conservation(c))
