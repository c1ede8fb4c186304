"""Executable checks of the CentralVR convergence theory.

Expectations over the sampled index are computed exhaustively (a sum over all
``n`` samples) so the lemma and unbiasedness checks are deterministic. The
epoch contraction holds only in expectation, so it is judged on the median
over several seeds.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import problems
from .optimizers import EpochInfo, GradientTable, OptConfig, Sampling, corrected_gradients, run_centralvr
from .problems import LossKind, Problem, SmoothnessConstants

LOGISTIC_ATOL = 1e-8  # the logistic minimizer is only known to about 1e-13


@dataclass(frozen=True)
class TheoremRate:
    alpha: float
    c: float
    eta_max: float
    valid: bool
    reason: str = ""


def theorem_rate_bound(consts: SmoothnessConstants, eta: float, n: int) -> TheoremRate:
    """Contraction factor ``alpha``, Lyapunov weight ``c`` and the sufficient step bound.

    ``alpha = max(1 - eta mu, 2 L^2 eta / (mu (1 - 2 L eta)))`` and
    ``c = 2 n eta (1 - 2 L eta)``. Any ``eta < mu / (2 L (L + mu))`` is valid.
    """
    L, mu = consts.L, consts.mu
    if not (eta > 0 and math.isfinite(eta)):
        raise ValueError(f"eta must be positive, got {eta}")
    if n < 1:
        raise ValueError("n must be >= 1")
    eta_max = mu / (2.0 * L * (L + mu))
    margin = 1.0 - 2.0 * L * eta
    if margin <= 0:
        return TheoremRate(math.inf, 2.0 * n * eta * margin, eta_max, False, "1 - 2 L eta <= 0")
    alpha = max(1.0 - eta * mu, 2.0 * L * L * eta / (mu * margin))
    c = 2.0 * n * eta * margin
    valid = 0.0 < alpha < 1.0 and c > 0
    if eta < eta_max * (1.0 - 1e-12) and not valid:
        raise AssertionError(f"eta={eta} is below eta_max={eta_max} but alpha={alpha}")
    return TheoremRate(alpha, c, eta_max, valid, "" if valid else f"alpha={alpha:.6g} is not in (0, 1)")


@dataclass
class Report:
    check: str
    trials: int
    violations: int
    worst_ratio: float
    passed: bool | None  # None for report-only runs
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "check": self.check,
            "trials": self.trials,
            "violations": self.violations,
            "worst_ratio": self.worst_ratio,
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict())


def _reference(p: Problem, x_star):
    x_star = problems.solve_reference(p) if x_star is None else np.asarray(x_star, dtype=np.float64)
    return x_star, problems.objective(p, x_star)


def _constants(p: Problem) -> SmoothnessConstants:
    # ridge gets the exact curvature bound of the mean objective
    return problems.smoothness_constants(p, expensive=p.kind is LossKind.RIDGE)


def _random_points(p: Problem, x_star, trials: int, seed: int) -> np.ndarray:
    """Points ``x* + s z`` with ``z`` standard normal and ``s`` log-uniform on [1e-2, 1e2]."""
    gen = np.random.default_rng(seed)
    scale = 10.0 ** gen.uniform(-2.0, 2.0, size=trials)
    return x_star[None, :] + scale[:, None] * gen.standard_normal((trials, p.d))


def _slack(p: Problem, fx: float) -> float:
    if p.kind is LossKind.LOGISTIC:
        return LOGISTIC_ATOL
    return 1e-12 * max(1.0, abs(fx))


def check_lemma1(p: Problem, trials: int = 1000, seed: int = 0, x_star=None, points=None) -> Report:
    """``mean_j ||grad f_j(x) - grad f_j(x*)||^2 <= 2 L (f(x) - f*)`` at random ``x``."""
    x_star, f_star = _reference(p, x_star)
    L = _constants(p).L
    g_star = problems.component_gradients(p, x_star)
    pts = _random_points(p, x_star, trials, seed) if points is None else np.atleast_2d(points)
    violations, worst = 0, 0.0
    for x in pts:
        fx = problems.objective(p, x)
        lhs = float(np.mean(np.sum((problems.component_gradients(p, x) - g_star) ** 2, axis=1)))
        rhs = 2.0 * L * (fx - f_star)
        if lhs > rhs + 2.0 * L * _slack(p, fx):
            violations += 1
        if lhs > 0:
            worst = max(worst, lhs / rhs if rhs > 0 else math.inf)
    return Report("lemma1", len(pts), violations, worst, violations == 0)


def check_lemma2(p: Problem, trials: int = 1000, seed: int = 0, x_star=None, points=None) -> Report:
    """``||grad f_i(x) - grad f_i(x*)||^2 <= (2 L^2 / mu)(f(x) - f*)`` per index, random ``(x, i)``."""
    x_star, f_star = _reference(p, x_star)
    consts = _constants(p)
    k = 2.0 * consts.L ** 2 / consts.mu
    pts = _random_points(p, x_star, trials, seed) if points is None else np.atleast_2d(points)
    idx = np.random.default_rng([seed, 1]).integers(0, p.n, size=len(pts))
    violations, worst = 0, 0.0
    for x, i in zip(pts, idx):
        fx = problems.objective(p, x)
        diff = problems.loss_gradient(p, x, int(i)) - problems.loss_gradient(p, x_star, int(i))
        lhs = float(diff @ diff)
        rhs = k * (fx - f_star)
        if lhs > rhs + k * _slack(p, fx):
            violations += 1
        if lhs > 0:
            worst = max(worst, lhs / rhs if rhs > 0 else math.inf)
    return Report("lemma2", len(pts), violations, worst, violations == 0)


def check_unbiasedness(p: Problem, table: GradientTable, x, tol: float = 1e-12) -> Report:
    """Exact mean over all ``i`` of the corrected gradient against the full gradient."""
    mean = corrected_gradients(table, p, x).mean(axis=0)
    err = float(np.max(np.abs(mean - problems.full_gradient(p, x))))
    ok = err <= tol
    return Report("unbiasedness", 1, 0 if ok else 1, err, ok)


def finite_difference_check(p: Problem, trials: int = 20, seed: int = 0, step: float = 1e-6, tol: float = 1e-5) -> Report:
    """Central differences of ``loss_value`` against ``loss_gradient``.

    The error is ``max|fd - g| / max(max|g|, 1)``.
    """
    gen = np.random.default_rng([seed, 2])
    violations, worst = 0, 0.0
    eye = np.eye(p.d)
    for _ in range(trials):
        x = gen.standard_normal(p.d)
        i = int(gen.integers(0, p.n))
        g = problems.loss_gradient(p, x, i)
        fd = np.array([
            (problems.loss_value(p, x + step * e, i) - problems.loss_value(p, x - step * e, i)) / (2.0 * step)
            for e in eye
        ])
        err = float(np.max(np.abs(fd - g))) / max(float(np.max(np.abs(g))), 1.0)
        worst = max(worst, err)
        violations += err > tol
    return Report("finite_difference", trials, int(violations), worst, violations == 0)


def lyapunov_sequence(p: Problem, cfg: OptConfig, c: float, x_star, f_star, x0=None) -> np.ndarray:
    """``V_m = ||x0_{m+1} - x*||^2 + c (fbar_m - f*)`` after each epoch ``m``.

    ``fbar_m`` averages the objective over the iterates at which the stored
    gradients were taken, tracked alongside the table.
    """
    fvals = np.zeros(p.n)
    out = []

    def watch(info: EpochInfo):
        fvals[info.order] = _objectives(p, info.iterates)
        dist = info.x_end - x_star
        out.append(float(dist @ dist) + c * (float(fvals.mean()) - f_star))

    run_centralvr(p, cfg, x0=x0, callback=watch)
    return np.array(out)


def _objectives(p: Problem, X) -> np.ndarray:
    """Objective at each row of ``X``."""
    T = X @ p.A.T  # rows: points, cols: samples
    if p.kind is LossKind.LOGISTIC:
        data = problems.softplus(p.b[None, :] * T).mean(axis=1)
    else:
        data = ((T - p.b[None, :]) ** 2).mean(axis=1)
    return data + p.lam * np.einsum("ij,ij->i", X, X)


def check_lyapunov_decay(
    p: Problem,
    cfg: OptConfig,
    seeds,
    slack: float = 0.05,
    x_star=None,
    report_only: bool = False,
) -> Report:
    """Median over seeds of ``V_{m+1} / V_m`` against the theorem's ``alpha``.

    Runs ``cfg.epochs`` epochs per seed (the first fills the table), giving
    ``cfg.epochs - 1`` ratios. Each ratio's median over seeds must stay below
    ``alpha + slack``. An invalid rate refuses to run unless ``report_only``.
    """
    if cfg.sampling is not Sampling.UNIFORM:
        raise ValueError("the contraction bound assumes uniform sampling with replacement")
    consts = _constants(p)
    rate = theorem_rate_bound(consts, cfg.eta, p.n)
    if not rate.valid and not report_only:
        raise ValueError(f"step size outside the theorem's range: {rate.reason}")
    x_star, f_star = _reference(p, x_star)
    c = rate.c if rate.c > 0 else 0.0
    ratios = []
    for s in seeds:
        run_cfg = OptConfig(cfg.eta, cfg.epochs, Sampling.UNIFORM, int(s), cfg.svrg_snapshot_period, cfg.storage, None, cfg.wall_clock)
        V = lyapunov_sequence(p, run_cfg, c, x_star, f_star)
        ratios.append(V[1:] / V[:-1])
    med = np.median(np.array(ratios), axis=0)
    bound = rate.alpha + slack
    violations = int(np.sum(med > bound))
    details = {"alpha": rate.alpha, "c": rate.c, "eta_max": rate.eta_max, "median_ratios": med.tolist()}
    passed = None if report_only else violations == 0
    return Report("lyapunov_decay", len(ratios[0]) if ratios else 0, violations, float(np.max(med)) if med.size else 0.0, passed, details)
