import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochwri.grid_model import Grid2D, SlownessSqModel
from stochwri.optimizer import (
    LOG_COLUMNS,
    AndersonConfig,
    anderson_run,
    gradient_descent_run,
)


def quadratic(target, weights=None):
    w = np.ones_like(target) if weights is None else weights

    def obj(m):
        r = m - target
        return 0.5 * float(np.sum(w * r * r)), w * r, 1

    return obj


def test_quadratic_converges(rng):
    target = rng.standard_normal((6, 5))
    x, log = anderson_run(quadratic(target), np.zeros((6, 5)),
                          AndersonConfig(step=0.5, max_iters=20, grad_tol=1e-14))
    assert len(log) <= 20
    assert np.max(np.abs(x - target)) <= 1e-8


def test_ill_conditioned_quadratic_beats_descent(rng):
    target = rng.standard_normal(40)
    w = np.logspace(-2, 0, 40)
    cfg = AndersonConfig(memory=5, step=1.0, max_iters=40, grad_tol=0.0)
    xa, _ = anderson_run(quadratic(target, w), np.zeros(40), cfg)
    xg, _ = gradient_descent_run(quadratic(target, w), np.zeros(40), 1.0, 40)
    assert np.linalg.norm(xa - target) < 0.1 * np.linalg.norm(xg - target)


def test_zero_gradient_returns_start():
    m0 = SlownessSqModel(Grid2D(4, 4, 1.0, 1.0), np.full((4, 4), 2.0))
    for run in (lambda o: anderson_run(o, m0), lambda o: gradient_descent_run(o, m0, 1.0, 10)):
        calls = []

        def obj(m):
            calls.append(1)
            return 1.0, np.zeros((4, 4))

        m, log = run(obj)
        assert isinstance(m, SlownessSqModel)
        assert np.array_equal(m.m, m0.m)
        assert len(log) == 1 and log.status == "converged" and len(calls) == 1


@settings(max_examples=20, deadline=None)
# step * max weight < 2 keeps the descent contractive
@given(st.floats(0.05, 1.3), st.floats(0.1, 1.0), st.integers(2, 15))
def test_memory_zero_is_damped_descent(step, beta, iters):
    target = np.linspace(-1.0, 2.0, 12)
    w = np.linspace(0.5, 1.5, 12)
    xa, la = anderson_run(quadratic(target, w), np.zeros(12),
                          AndersonConfig(memory=0, relaxation=beta, step=step, max_iters=iters,
                                         grad_tol=0.0))
    xg, lg = gradient_descent_run(quadratic(target, w), np.zeros(12), beta * step, iters)
    np.testing.assert_allclose(xa, xg, rtol=0, atol=1e-14)
    np.testing.assert_allclose(la.values, lg.values, rtol=1e-13, atol=1e-14 * la.values[0])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 4), st.floats(0.1, 1.9))
def test_bounds_hold_at_every_iterate(memory, step):
    target = np.array([-3.0, 0.5, 4.0, 1.0])
    lo, hi = np.array([-1.0, 0.0, 0.0, 0.9]), np.array([1.0, 1.0, 2.0, 1.1])
    seen = []

    def obj(m):
        seen.append(m.copy())
        return quadratic(target)(m)

    x, _ = anderson_run(obj, np.zeros(4), AndersonConfig(memory=memory, step=step, max_iters=15),
                        bounds=(lo, hi))
    for m in seen:
        assert np.all(m >= lo) and np.all(m <= hi)


def test_bounded_minimizer_reached():
    target = np.array([-3.0, 0.5, 4.0, 1.0])
    lo, hi = np.array([-1.0, 0.0, 0.0, 0.9]), np.array([1.0, 1.0, 2.0, 1.1])
    x, _ = anderson_run(quadratic(target), np.zeros(4), AndersonConfig(step=0.7, max_iters=30),
                        bounds=(lo, hi))
    np.testing.assert_allclose(x, np.clip(target, lo, hi), atol=1e-8)


def test_descent_bounds_and_convergence():
    target = np.array([5.0, -5.0, 0.25])
    x, log = gradient_descent_run(quadratic(target), np.zeros(3), 0.5, 60, bounds=(-1.0, 1.0))
    np.testing.assert_allclose(x, [1.0, -1.0, 0.25], atol=1e-12)
    assert len(log) <= 60


def test_deterministic_logs(rng):
    target = rng.standard_normal(10)
    runs = [anderson_run(quadratic(target), np.zeros(10), AndersonConfig(step=0.3, max_iters=12))
            for _ in range(2)]
    a, b = ([(r.iter, r.value, r.grad_norm, r.pde_solves) for r in log.records] for _, log in runs)
    assert a == b


def test_log_contents(tmp_path):
    target = np.full(3, 2.0)
    _, log = anderson_run(quadratic(target), np.zeros(3), AndersonConfig(step=0.5, max_iters=5),
                          m_true=target)
    assert len(log) <= 5
    assert [r.iter for r in log.records] == list(range(len(log)))
    assert log.records[0].model_rel_err == pytest.approx(1.0)
    assert log.records[0].pde_solves == 1
    assert log.pde_solves == log.evaluations
    path = tmp_path / "log.csv"
    log.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert tuple(rows[0]) == LOG_COLUMNS
    assert all(r[-1] == "" for r in rows[1:])
    log.to_csv(path, wall_time=True)
    assert all(float(r[-1]) >= 0 for r in list(csv.reader(open(path)))[1:])


def test_nonfinite_objective_keeps_last_good(rng):
    def obj(m):
        if m[0] > 0.5:
            return float("nan"), np.full_like(m, np.nan)
        return quadratic(np.ones(2))(m)

    x, log = anderson_run(obj, np.zeros(2), AndersonConfig(memory=0, step=0.4, max_iters=10))
    assert log.status == "non-finite"
    assert np.all(np.isfinite(x)) and x[0] <= 0.5

    with pytest.raises(FloatingPointError):
        anderson_run(lambda m: (np.inf, np.zeros_like(m)), np.zeros(2))


def test_normalized_step_scale_invariant():
    target = np.array([0.3, 0.7])
    cfg = AndersonConfig(memory=0, step=0.1, max_iters=3, normalize_step=True)
    x1, _ = anderson_run(quadratic(target), np.zeros(2), cfg, bounds=(0.0, 1.0))
    # scaling the objective leaves the normalized trajectory unchanged
    x2, _ = anderson_run(lambda m: tuple(v * 100 if i < 2 else v
                                         for i, v in enumerate(quadratic(target)(m))),
                         np.zeros(2), cfg, bounds=(0.0, 1.0))
    np.testing.assert_allclose(x1, x2, rtol=1e-14)


def test_safeguard_rejects_blowup():
    # Anderson extrapolation on a strongly non-quadratic objective; the
    # accepted iterates must never increase the value more than tenfold
    def obj(m):
        return float(np.sum(m ** 4) + np.sum(m ** 2)), 4 * m ** 3 + 2 * m

    _, log = anderson_run(obj, np.full(5, 1.5), AndersonConfig(memory=3, step=0.05, max_iters=30))
    v = log.values
    assert np.all(v[1:] <= 10 * v[:-1])
    assert v[-1] < v[0]


def test_config_validation():
    for bad in (dict(memory=-1), dict(step=0.0), dict(max_iters=0), dict(relaxation=1.5)):
        with pytest.raises(ValueError):
            AndersonConfig(**bad)
    with pytest.raises(ValueError):
        gradient_descent_run(quadratic(np.zeros(2)), np.zeros(2), -1.0, 3)
    with pytest.raises(ValueError):
        anderson_run(quadratic(np.zeros(2)), np.zeros(2), bounds=(1.0, 0.0))
