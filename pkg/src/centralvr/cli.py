"""``bench`` command line: run, sweep, verify and gen-data.

Experiments are described by an INI file (``key = value`` lines, one section
per component, ``#`` comments)::

    [problem]
    kind = logistic          # logistic | ridge
    lam = 1e-4
    source = synthetic       # synthetic | libsvm
    n = 5000
    d = 20
    seed = 0

    [optimizer]
    algorithm = centralvr
    eta = 1/32L              # a number, or k/L / 1/kL relative to the bound L
    epochs = 30
    tol = 1e-8

    [cluster]                # distributed algorithms only
    p = 4
    comm_latency = 1.0

    [output]
    path = trace.csv
    wall_time = false        # write 0.0 wall times so traces are byte-stable

``--set section.key=value`` overrides any file key.

Exit codes: 0 success, 1 invalid configuration, 2 divergence (the partial
trace is still written), 3 failed verification.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data, problems, theory
from .distributed import DISTRIBUTED, ClusterConfig
from .optimizers import SEQUENTIAL, GradientTable, OptConfig, RunResult
from .problems import Problem
from .trace import DivergenceError, export_trace

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_VERIFY = 0, 1, 2, 3

ALGORITHMS = tuple(SEQUENTIAL) + tuple(DISTRIBUTED)
SWEEP_AXES = {
    "p": ("cluster", "p"),
    "tau": ("cluster", "tau"),
    "eta": ("optimizer", "eta"),
    "speed_factors": ("cluster", "speed_factors"),
}

KNOWN_KEYS = {
    "problem": {"kind", "lam", "source", "n", "d", "seed", "noise", "path", "expected_dim"},
    "optimizer": {"algorithm", "eta", "epochs", "sampling", "seed", "svrg_snapshot_period", "storage", "tol"},
    "cluster": {
        "p", "tau", "speed_factors", "comm_latency", "alpha", "seed", "partition",
        "weighting", "strict_paper", "samples_per_worker",
    },
    "output": {"path", "format", "wall_time", "reference", "target", "summary"},
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending field."""


@dataclass
class ExperimentConfig:
    problem: dict
    algorithm: str
    optimizer: dict
    cluster: dict | None
    output: dict = field(default_factory=dict)

    @property
    def distributed(self) -> bool:
        return self.algorithm in DISTRIBUTED


def _get(section: dict, key: str, where: str, cast, default=None):
    raw = section.get(key)
    if raw is None or raw == "":
        return default
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key}: cannot parse {raw!r} ({exc})") from None


def _bool(raw: str) -> bool:
    s = str(raw).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _floats(raw: str) -> tuple:
    return tuple(float(v) for v in str(raw).split(",") if v.strip())


def read_config(path=None, overrides=()) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config: no such file {path}")
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"config: {exc}") from None
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"--set {item!r}: expected section.key=value")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, name, value.strip())
    for section in cp.sections():
        if section not in KNOWN_KEYS:
            raise ConfigError(f"config: unknown section [{section}]")
        for key in cp[section]:
            if key not in KNOWN_KEYS[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
    return cp


def parse_experiment(cp: configparser.ConfigParser) -> ExperimentConfig:
    sec = {s: dict(cp[s]) for s in cp.sections()}
    opt = sec.get("optimizer", {})
    algorithm = opt.get("algorithm")
    if algorithm is None:
        raise ConfigError("optimizer.algorithm: required")
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"optimizer.algorithm: unknown {algorithm!r}, choose from {', '.join(ALGORITHMS)}")
    if "eta" not in opt:
        raise ConfigError("optimizer.eta: required")
    cluster = sec.get("cluster")
    if algorithm in DISTRIBUTED and cluster is None:
        cluster = {}
    if algorithm not in DISTRIBUTED and cluster:
        raise ConfigError(f"cluster: section given but {algorithm} runs on one worker")
    return ExperimentConfig(sec.get("problem", {}), algorithm, opt, cluster, sec.get("output", {}))


def _parse_eta(raw: str, L: float) -> float:
    s = raw.replace(" ", "")
    if s.endswith("L"):
        head = s[:-1]
        if head.endswith("/"):  # "k/L"
            return float(head[:-1]) / L
        num, slash, den = head.partition("/")  # "1/kL"
        if slash:
            return float(num) / (float(den) * L)
        raise ValueError("use k/L or 1/kL")
    return float(s)


def build_problem(exp: ExperimentConfig) -> Problem:
    ps = exp.problem
    kind = _get(ps, "kind", "problem", problems.LossKind, problems.LossKind.LOGISTIC)
    lam = _get(ps, "lam", "problem", float, 1e-4)
    source = ps.get("source", "synthetic")
    if source == "synthetic":
        n = _get(ps, "n", "problem", int, 1000)
        per = _get(exp.cluster or {}, "samples_per_worker", "cluster", int)
        if per is not None:
            n = per * _get(exp.cluster, "p", "cluster", int, 1)
        d = _get(ps, "d", "problem", int, 20)
        seed = _get(ps, "seed", "problem", int, 0)
        try:
            if kind is problems.LossKind.LOGISTIC:
                ds = data.generate_classification(n, d, seed)
            else:
                ds, _ = data.generate_regression(n, d, seed, _get(ps, "noise", "problem", float, 1.0))
        except ValueError as exc:
            raise ConfigError(f"problem: {exc}") from None
    elif source == "libsvm":
        path = ps.get("path")
        if not path:
            raise ConfigError("problem.path: required when source = libsvm")
        try:
            ds = data.read_libsvm(path, _get(ps, "expected_dim", "problem", int), signed_labels=kind is problems.LossKind.LOGISTIC)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"problem.path: {exc}") from None
    else:
        raise ConfigError(f"problem.source: unknown {source!r}")
    try:
        return Problem(kind, ds, lam)
    except ValueError as exc:
        raise ConfigError(f"problem.lam: {exc}") from None


def build_opt(exp: ExperimentConfig, prob: Problem) -> OptConfig:
    o = exp.optimizer
    L = problems.smoothness_constants(prob).L if prob.lam > 0 else _plain_L(prob)
    out = exp.output
    try:
        return OptConfig(
            eta=_get(o, "eta", "optimizer", lambda r: _parse_eta(r, L)),
            epochs=_get(o, "epochs", "optimizer", int, 30),
            sampling=o.get("sampling", "permutation"),
            seed=_get(o, "seed", "optimizer", int, 0),
            svrg_snapshot_period=_get(o, "svrg_snapshot_period", "optimizer", int, 2),
            storage=o.get("storage", "full"),
            tol=_get(o, "tol", "optimizer", float),
            wall_clock=_get(out, "wall_time", "output", _bool, True),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"optimizer: {exc}") from None


def _plain_L(prob: Problem) -> float:
    row_sq = float(np.max(np.einsum("ij,ij->i", prob.A, prob.A)))
    return 0.25 * row_sq if prob.kind is problems.LossKind.LOGISTIC else 2.0 * row_sq


def build_cluster(exp: ExperimentConfig) -> ClusterConfig:
    c = exp.cluster or {}
    try:
        return ClusterConfig(
            p=_get(c, "p", "cluster", int, 1),
            tau=_get(c, "tau", "cluster", int),
            speed_factors=_get(c, "speed_factors", "cluster", _floats),
            comm_latency=_get(c, "comm_latency", "cluster", float, 0.0),
            alpha=_get(c, "alpha", "cluster", float),
            seed=_get(c, "seed", "cluster", int, 0),
            partition=c.get("partition", "contiguous"),
            weighting=c.get("weighting", "uniform"),
            strict_paper=_get(c, "strict_paper", "cluster", _bool, False),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"cluster: {exc}") from None


def execute(exp: ExperimentConfig) -> RunResult:
    """Run the configured algorithm. Raises ConfigError or DivergenceError."""
    prob = build_problem(exp)
    cfg = build_opt(exp, prob)
    x_star = None
    if _get(exp.output, "reference", "output", _bool, True):
        x_star = problems.solve_reference(prob)
    if exp.distributed:
        cluster = build_cluster(exp)
        try:
            return DISTRIBUTED[exp.algorithm](prob, cluster, cfg, x_star=x_star)
        except DivergenceError:
            raise
        except ValueError as exc:
            raise ConfigError(f"cluster: {exc}") from None
    return SEQUENTIAL[exp.algorithm](prob, cfg, x_star=x_star)


def _format(exp: ExperimentConfig, path: Path) -> str:
    fmt = exp.output.get("format")
    if fmt:
        if fmt not in ("csv", "json"):
            raise ConfigError(f"output.format: unknown {fmt!r}")
        return fmt
    return "json" if path.suffix == ".json" else "csv"


def run_experiment(exp: ExperimentConfig, path=None) -> tuple[RunResult, Path]:
    """Execute and write the trace. A diverged run writes what it has, then re-raises."""
    path = Path(path or exp.output.get("path", "trace.csv"))
    fmt = _format(exp, path)
    try:
        res = execute(exp)
    except DivergenceError as exc:
        if exc.trace:
            export_trace(exc.trace, fmt, path)
        raise
    export_trace(res.trace, fmt, path)
    return res, path


def _to_target(trace, target):
    for r in trace:
        if r.rel_grad_norm <= target:
            return r
    return None


SUMMARY_COLUMNS = (
    "axis", "value", "status", "epochs_to_target", "virtual_time_to_target",
    "grad_evals_to_target", "final_rel_grad_norm", "metric_evals", "trace",
)


def sweep(cp: configparser.ConfigParser, axis: str, values: list[str], out_dir=None) -> list[dict]:
    """One run per value of ``axis``; failures are recorded and the sweep goes on."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"--axis: unknown {axis!r}, choose from {', '.join(SWEEP_AXES)}")
    section, key = SWEEP_AXES[axis]
    base = parse_experiment(cp)
    if section == "cluster" and not base.distributed:
        raise ConfigError(f"--axis {axis}: {base.algorithm} has no cluster")
    target = _get(base.output, "target", "output", float, 1e-6)
    trace_path = Path(base.output.get("path", "trace.csv"))
    out_dir = Path(out_dir) if out_dir else trace_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        sub = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
        sub.read_dict({s: dict(cp[s]) for s in cp.sections()})
        if not sub.has_section(section):
            sub.add_section(section)
        sub.set(section, key, value)
        safe = value.replace(",", "-").replace("/", "_")
        path = out_dir / f"{trace_path.stem}_{axis}={safe}{trace_path.suffix or '.csv'}"
        row = dict.fromkeys(SUMMARY_COLUMNS, "")
        row.update(axis=axis, value=value, trace=str(path))
        try:
            res, _ = run_experiment(parse_experiment(sub), path)
            hit = _to_target(res.trace, target)
            row.update(
                status="ok" if hit else "not_reached",
                final_rel_grad_norm=repr(res.trace[-1].rel_grad_norm),
                metric_evals=res.metric_evals,
            )
            if hit:
                row.update(epochs_to_target=hit.epoch, virtual_time_to_target=repr(hit.virtual_time), grad_evals_to_target=hit.grad_evals)
        except DivergenceError as exc:
            row["status"] = f"diverged: {exc}"
        except (ConfigError, ValueError) as exc:
            row["status"] = f"error: {exc}"
        rows.append(row)
    summary = Path(base.output.get("summary") or out_dir / f"{trace_path.stem}_sweep_{axis}.csv")
    with open(summary, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return rows


def verify_suite(seed: int = 0) -> list[theory.Report]:
    """Theory checks on small synthetic problems."""
    ridge_ds, _ = data.generate_regression(500, 10, seed)
    ridge = Problem("ridge", ridge_ds, 1e-3)
    logit = Problem("logistic", data.generate_classification(2000, 20, seed), 1e-4)
    reports = [
        theory.check_lemma1(ridge, 1000, seed),
        theory.check_lemma2(ridge, 1000, seed),
        theory.finite_difference_check(ridge, 20, seed, tol=1e-9),
        theory.finite_difference_check(logit, 20, seed),
    ]
    gen = np.random.default_rng(seed)
    worst, bad = 0.0, 0
    for _ in range(10):
        table = GradientTable.from_points(logit, gen.standard_normal((logit.n, logit.d)))
        r = theory.check_unbiasedness(logit, table, gen.standard_normal(logit.d))
        worst, bad = max(worst, r.worst_ratio), bad + r.violations
    reports.append(theory.Report("unbiasedness", 10, bad, worst, bad == 0))
    reports.append(_rate_sweep(seed))
    consts = problems.smoothness_constants(ridge, expensive=True)
    eta = 0.9 * consts.mu / (2 * consts.L * (consts.L + consts.mu))
    reports.append(theory.check_lyapunov_decay(ridge, OptConfig(eta, 21, "uniform"), range(11)))
    return reports


def _rate_sweep(seed: int, trials: int = 10_000) -> theory.Report:
    """Every step below the sufficient bound must give a valid rate."""
    gen = np.random.default_rng([seed, 3])
    bad = 0
    for _ in range(trials):
        mu = 10.0 ** gen.uniform(-4, 1)
        L = mu * 10.0 ** gen.uniform(0, 4)
        consts = problems.SmoothnessConstants(L, mu)
        eta = gen.uniform(0.0, 1.0) * mu / (2 * L * (L + mu))
        if eta > 0 and not theory.theorem_rate_bound(consts, eta, 100).valid:
            bad += 1
    return theory.Report("rate_validity", trials, bad, 0.0, bad == 0)


def gen_data(kind: str, n: int, d: int, seed: int, out, noise: float = 1.0) -> Path:
    if kind == "classification":
        ds = data.generate_classification(n, d, seed)
    elif kind == "regression":
        ds, _ = data.generate_regression(n, d, seed, noise)
    else:
        raise ConfigError(f"--kind: unknown {kind!r}")
    data.write_libsvm(ds, out)
    return Path(out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="CentralVR and baseline optimizer benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment and write its trace")
    run.add_argument("--config", required=True)
    run.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")

    sw = sub.add_parser("sweep", help="run one experiment per value of a parameter")
    sw.add_argument("--config", required=True)
    sw.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    sw.add_argument("--values", required=True, help="comma separated; use ';' between speed_factors lists")
    sw.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    sw.add_argument("--out-dir", default=None)

    ver = sub.add_parser("verify", help="run the theory checks")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--json", default=None, help="also write the reports to this file")

    gd = sub.add_parser("gen-data", help="write a synthetic dataset in LIBSVM format")
    gd.add_argument("--kind", required=True, choices=["classification", "regression"])
    gd.add_argument("--n", type=int, required=True)
    gd.add_argument("--d", type=int, required=True)
    gd.add_argument("--seed", type=int, default=0)
    gd.add_argument("--noise", type=float, default=1.0)
    gd.add_argument("--out", required=True)
    return parser


def _split_values(axis: str, raw: str) -> list[str]:
    sep = ";" if axis == "speed_factors" else ","
    return [v.strip() for v in raw.split(sep) if v.strip()]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            exp = parse_experiment(read_config(args.config, args.set))
            try:
                res, path = run_experiment(exp)
            except DivergenceError as exc:
                print(f"diverged: {exc}", file=sys.stderr)
                return EXIT_DIVERGED
            last = res.trace[-1]
            print(f"{exp.algorithm}: {len(res.trace) - 1} epochs, rel_grad_norm={last.rel_grad_norm:.3e}, "
                  f"grad_evals={last.grad_evals}, virtual_time={last.virtual_time:g} -> {path}")
            return EXIT_OK
        if args.command == "sweep":
            cp = read_config(args.config, args.set)
            rows = sweep(cp, args.axis, _split_values(args.axis, args.values), args.out_dir)
            for r in rows:
                print(f"{r['axis']}={r['value']}: {r['status']} epochs={r['epochs_to_target']} virtual_time={r['virtual_time_to_target']}")
            return EXIT_OK
        if args.command == "verify":
            reports = verify_suite(args.seed)
            for r in reports:
                print(r.to_json())
            if args.json:
                Path(args.json).write_text(json.dumps([r.as_dict() for r in reports], indent=1) + "\n", encoding="utf-8")
            return EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY
        if args.command == "gen-data":
            path = gen_data(args.kind, args.n, args.d, args.seed, args.out, args.noise)
            print(f"wrote {args.n} samples to {path}")
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
