import numpy as np
import pytest

from centralvr import problems, rng
from centralvr.optimizers import (
    GradientTable,
    OptConfig,
    corrected_gradient,
    corrected_gradients,
    run_centralvr,
    run_saga,
    run_sgd,
    run_svrg,
)
from centralvr.trace import DivergenceError

from conftest import tiny


def ridge_grad(A, b, lam, x, i):
    return 2.0 * A[i] * (A[i] @ x - b[i]) + 2.0 * lam * x


def oracle_centralvr(A, b, lam, eta, epochs, seed):
    n, d = A.shape
    x, G, acc = np.zeros(d), np.zeros((n, d)), np.zeros(d)
    for i in rng.permutation(n, seed, 1):
        g = ridge_grad(A, b, lam, x, i)
        x = x - eta * g
        G[i] = g
        acc = acc + g / n
    gbar = acc
    for e in range(2, epochs + 1):
        acc = np.zeros(d)
        for i in rng.permutation(n, seed, e):
            g = ridge_grad(A, b, lam, x, i)
            x = x - eta * (g - G[i] + gbar)
            acc = acc + g / n
            G[i] = g
        gbar = acc
    return x


def oracle_saga(A, b, lam, eta, epochs, seed):
    n, d = A.shape
    x, G, gbar = np.zeros(d), np.zeros((n, d)), np.zeros(d)
    for i in rng.permutation(n, seed, 1):
        g = ridge_grad(A, b, lam, x, i)
        x = x - eta * g
        G[i] = g
        gbar = gbar + g / n
    for e in range(2, epochs + 1):
        for i in rng.permutation(n, seed, e):
            g = ridge_grad(A, b, lam, x, i)
            x = x - eta * (g - G[i] + gbar)
            gbar = gbar + (g - G[i]) / n
            G[i] = g
    return x


def oracle_svrg(A, b, lam, eta, epochs, seed, period):
    n, d = A.shape
    x = np.zeros(d)
    for e in range(1, epochs + 1):
        if (e - 1) % period == 0:
            y = x.copy()
            mu = sum(ridge_grad(A, b, lam, y, j) for j in range(n)) / n
        for i in rng.permutation(n, seed, e):
            x = x - eta * (ridge_grad(A, b, lam, x, i) - ridge_grad(A, b, lam, y, i) + mu)
    return x


def oracle_sgd(A, b, lam, eta, epochs, seed):
    x = np.zeros(A.shape[1])
    for e in range(1, epochs + 1):
        for i in rng.permutation(A.shape[0], seed, e):
            x = x - eta * ridge_grad(A, b, lam, x, i)
    return x


def theorem_eta(p):
    c = problems.smoothness_constants(p)
    return 0.9 * c.mu / (2 * c.L * (c.L + c.mu))


@pytest.mark.parametrize("name", ["centralvr", "saga", "svrg", "sgd"])
def test_clean_room_trajectories(toy_ridge, name):
    p = toy_ridge
    eta = 0.05 / problems.smoothness_constants(p).L if name != "centralvr" else theorem_eta(p) * 50
    cfg = OptConfig(eta, epochs=3, seed=4)
    A, b = p.A, p.b
    got, want = {
        "centralvr": (run_centralvr, lambda: oracle_centralvr(A, b, p.lam, eta, 3, 4)),
        "saga": (run_saga, lambda: oracle_saga(A, b, p.lam, eta, 3, 4)),
        "svrg": (run_svrg, lambda: oracle_svrg(A, b, p.lam, eta, 3, 4, 2)),
        "sgd": (run_sgd, lambda: oracle_sgd(A, b, p.lam, eta, 3, 4)),
    }[name]
    x = got(p, cfg).x
    ref = want()
    assert np.max(np.abs(x - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


def test_centralvr_theorem_step_clean_room(toy_ridge):
    eta = theorem_eta(toy_ridge)
    x = run_centralvr(toy_ridge, OptConfig(eta, epochs=3, seed=1)).x
    ref = oracle_centralvr(toy_ridge.A, toy_ridge.b, toy_ridge.lam, eta, 3, 1)
    assert np.max(np.abs(x - ref)) <= 1e-10


def test_sgd_single_step():
    # f(x) = x^2 written as ridge with a = 1, b = 0
    p = tiny("ridge", [[1.0]], [0.0])
    res = run_sgd(p, OptConfig(0.25, epochs=1), x0=[1.0])
    assert res.x.tolist() == [0.5]


def test_sgd_zero_step(toy_ridge):
    x0 = np.arange(5.0)
    assert np.array_equal(run_sgd(toy_ridge, OptConfig(0.0, epochs=2), x0=x0).x, x0)


def test_centralvr_n1_is_gradient_descent():
    p = tiny("ridge", [[1.0, 2.0]], [1.0], lam=0.01)
    eta = 0.05
    x = np.zeros(2)
    for _ in range(6):
        x = x - eta * problems.full_gradient(p, x)
    res = run_centralvr(p, OptConfig(eta, epochs=6))
    assert np.allclose(res.x, x, rtol=0, atol=1e-15)


def test_telescoping(toy_ridge):
    eta = 0.02 / problems.smoothness_constants(toy_ridge).L
    checks = []

    def cb(info):
        if info.epoch >= 2:
            checks.append((info.x_start.copy(), info.x_end.copy(), info.table.stored.sum(axis=0).copy()))

    run_centralvr(toy_ridge, OptConfig(eta, epochs=8), callback=cb)
    # x_end(m+1) = x_end(m) - eta * sum of the gradients stored during epoch m+1
    for (_, end_prev, _), (_, end, stored_sum) in zip(checks, checks[1:]):
        pred = end_prev - eta * stored_sum
        assert np.linalg.norm(end - pred) <= 1e-8 * np.linalg.norm(end)


def test_ledgers(toy_ridge):
    n = toy_ridge.n
    cfg = OptConfig(0.001, epochs=2)
    assert run_svrg(toy_ridge, cfg).trace[-1].grad_evals == 500
    assert run_saga(toy_ridge, cfg).trace[-1].grad_evals == 2 * n
    assert run_centralvr(toy_ridge, cfg).trace[-1].grad_evals == 2 * n
    assert run_sgd(toy_ridge, cfg).trace[-1].grad_evals == 2 * n
    svrg4 = run_svrg(toy_ridge, OptConfig(0.001, epochs=4)).trace
    assert svrg4[-1].grad_evals == 2.5 * n * 4


def test_saga_incremental_average(toy_logistic):
    p = toy_logistic
    for epochs in (2, 3, 5):
        res = run_saga(p, OptConfig(0.1, epochs=epochs, sampling="uniform"))
        assert np.max(np.abs(res.table.avg - res.table.stored.mean(axis=0))) <= 1e-10


def test_corrected_gradient_examples(toy_logistic):
    p = toy_logistic
    x = np.random.default_rng(0).standard_normal(p.d)
    table = GradientTable.from_points(p, np.tile(x, (p.n, 1)))
    before = table.stored.copy()
    for i in (0, 7, p.n - 1):
        assert np.allclose(corrected_gradient(table, p, x, i), table.avg, rtol=0, atol=1e-15)
    assert np.array_equal(table.stored, before)
    xs = problems.solve_reference(p)
    at_star = GradientTable.from_points(p, np.tile(xs, (p.n, 1)))
    assert np.max(np.abs(corrected_gradient(at_star, p, xs, 3))) <= 1e-12


def test_corrected_gradient_exhaustive_mean(toy_logistic):
    p = toy_logistic
    gen = np.random.default_rng(1)
    for mode in ("full", "compact"):
        table = GradientTable.from_points(p, gen.standard_normal((p.n, p.d)), mode)
        x = gen.standard_normal(p.d)
        rows = np.array([corrected_gradient(table, p, x, i) for i in range(p.n)])
        assert np.allclose(rows, corrected_gradients(table, p, x), rtol=0, atol=1e-14)
        assert np.max(np.abs(rows.mean(axis=0) - problems.full_gradient(p, x))) <= 1e-12


def test_uninitialized_table(toy_ridge):
    with pytest.raises(ValueError):
        corrected_gradient(GradientTable.empty(toy_ridge), toy_ridge, np.zeros(5), 0)


def test_compact_matches_full_without_regularizer(toy_logistic):
    p = problems.Problem("logistic", toy_logistic.data, 0.0)
    for run in (run_centralvr, run_saga):
        full = run(p, OptConfig(0.5, epochs=6, wall_clock=False))
        compact = run(p, OptConfig(0.5, epochs=6, storage="compact", wall_clock=False))
        assert np.max(np.abs(full.x - compact.x)) <= 1e-10
        for a, b in zip(full.trace, compact.trace):
            assert abs(a.rel_grad_norm - b.rel_grad_norm) <= 1e-10


def test_compact_converges_with_regularizer(toy_logistic):
    res = run_centralvr(toy_logistic, OptConfig(0.5, epochs=60, storage="compact", tol=1e-8))
    assert res.trace[-1].rel_grad_norm <= 1e-8


def test_divergence_guard(toy_ridge):
    with pytest.raises(DivergenceError) as err:
        run_centralvr(toy_ridge, OptConfig(5.0, epochs=5))
    assert err.value.trace and err.value.trace[0].epoch == 0


def test_config_validation():
    with pytest.raises(ValueError):
        OptConfig(-0.1)
    with pytest.raises(ValueError):
        OptConfig(0.1, epochs=0)
    with pytest.raises(ValueError):
        OptConfig(0.1, sampling="cyclic")


def test_tolerance_stops_early(toy_ridge):
    res = run_centralvr(toy_ridge, OptConfig(0.02 / problems.smoothness_constants(toy_ridge).L, epochs=500, tol=1e-6))
    assert res.trace[-1].rel_grad_norm <= 1e-6
    assert len(res.trace) < 501
    assert res.trace[0].rel_grad_norm == 1.0
    evals = [r.grad_evals for r in res.trace]
    assert evals == sorted(evals)


def test_metric_evals_kept_apart(toy_ridge):
    res = run_centralvr(toy_ridge, OptConfig(0.001, epochs=3))
    assert res.trace[-1].grad_evals == 3 * toy_ridge.n
    assert res.metric_evals == 4 * toy_ridge.n  # initial norm plus one per epoch


@pytest.mark.parametrize("run", [run_sgd, run_svrg, run_saga, run_centralvr])
def test_deterministic(toy_logistic, run):
    cfg = OptConfig(0.3, epochs=4, sampling="uniform", seed=2, wall_clock=False)
    assert run(toy_logistic, cfg).trace == run(toy_logistic, cfg).trace
