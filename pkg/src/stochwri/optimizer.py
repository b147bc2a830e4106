"""Projected Anderson acceleration on the gradient fixed-point map.

The map is ``g(m) = P(m - step * grad f(m))`` with ``P`` the elementwise
clamp onto the bounds. Anderson (type II) mixes the last ``memory``
fixed-point residuals ``g(m) - m`` via a ridge-regularized least-squares
solve. ``memory=0`` reduces to projected gradient descent.
"""
from __future__ import annotations

import csv
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid_model import SlownessSqModel

LOG_COLUMNS = ("iter", "value", "grad_norm", "model_rel_err", "pde_solves", "seconds")


@dataclass(frozen=True)
class AndersonConfig:
    memory: int = 5
    relaxation: float = 1.0
    step: float = 1.0
    max_iters: int = 50
    grad_tol: float = 1e-6
    regularization: float = 1e-10
    # step in units of (bounds range) / ||grad f(m0)||_inf
    normalize_step: bool = False

    def __post_init__(self):
        if self.memory < 0:
            raise ValueError("memory must be non-negative")
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must lie in (0, 1]")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    value: float
    grad_norm: float
    model_rel_err: float
    pde_solves: int
    seconds: float


@dataclass
class IterationLog:
    records: list[IterationRecord] = field(default_factory=list)
    status: str = "running"
    # objective calls, including rejected accelerated steps
    evaluations: int = 0

    def __len__(self):
        return len(self.records)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.records])

    @property
    def pde_solves(self) -> int:
        return self.records[-1].pde_solves if self.records else 0

    def to_csv(self, path, wall_time: bool = False):
        """Write the log; ``seconds`` is left empty unless ``wall_time`` is set."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for r in self.records:
                w.writerow([r.iter, repr(r.value), repr(r.grad_norm), repr(r.model_rel_err),
                            r.pde_solves, repr(r.seconds) if wall_time else ""])


class _Evaluator:
    """Wraps the user objective: unpacks results, tracks solves and timing."""

    def __init__(self, obj, template, m_true):
        self.obj = obj
        self.template = template
        self.m_true = None if m_true is None else np.asarray(
            m_true.m if isinstance(m_true, SlownessSqModel) else m_true)
        self.pde_solves = 0
        self.calls = 0
        self.t0 = time.perf_counter()

    def wrap(self, x):
        if isinstance(self.template, SlownessSqModel):
            return SlownessSqModel(self.template.grid, x)
        return x

    def __call__(self, x):
        out = self.obj(self.wrap(x))
        self.calls += 1
        if isinstance(out, tuple):
            value, grad = out[0], out[1]
            solves = out[2] if len(out) > 2 else 0
        else:
            value, grad, solves = out.value, out.gradient, out.pde_solves
        self.pde_solves += int(solves)
        return float(value), np.asarray(grad, dtype=np.float64).reshape(x.shape)

    def record(self, log, it, x, value, grad):
        err = (float(np.linalg.norm(x - self.m_true) / np.linalg.norm(self.m_true))
               if self.m_true is not None else float("nan"))
        log.records.append(IterationRecord(it, value, float(np.linalg.norm(grad)), err,
                                           self.pde_solves, time.perf_counter() - self.t0))


def _bounds(bounds, shape):
    lo, hi = (None, None) if bounds is None else bounds
    lo = np.full(shape, -np.inf) if lo is None else np.broadcast_to(np.asarray(lo, float), shape)
    hi = np.full(shape, np.inf) if hi is None else np.broadcast_to(np.asarray(hi, float), shape)
    if np.any(lo > hi):
        raise ValueError("lower bound exceeds upper bound")
    return lo, hi


def _start(m0):
    x = np.array(m0.m if isinstance(m0, SlownessSqModel) else m0, dtype=np.float64)
    return x


def _result(m0, x):
    if isinstance(m0, SlownessSqModel):
        return SlownessSqModel(m0.grid, x)
    return x


def anderson_run(obj: Callable, m0, cfg: AndersonConfig = AndersonConfig(),
                 bounds=None, m_true=None):
    """Minimize ``obj`` from ``m0``; returns ``(model, IterationLog)``.

    ``obj`` receives a model of the same type as ``m0`` and returns either an
    object with ``value``, ``gradient`` and ``pde_solves`` attributes or a
    tuple ``(value, gradient[, pde_solves])``. Every objective evaluation
    that produces an accepted iterate is one log row, so the log holds at
    most ``max_iters`` rows including the starting model. If an accelerated
    step raises the objective more than tenfold, the plain damped step is
    taken instead and the history is cleared.
    """
    lo, hi = _bounds(bounds, np.shape(_start(m0)))
    x = np.clip(_start(m0), lo, hi)
    ev = _Evaluator(obj, m0, m_true)
    log = IterationLog()
    value, grad = ev(x)
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        raise FloatingPointError("objective is not finite at the starting model")
    ev.record(log, 0, x, value, grad)

    step = cfg.step
    if cfg.normalize_step:
        gmax = np.max(np.abs(grad))
        span = hi - lo
        span = np.max(span) if np.all(np.isfinite(span)) else np.max(np.abs(x))
        if gmax > 0:
            step = cfg.step * span / gmax

    beta = cfg.relaxation
    xs: deque = deque(maxlen=cfg.memory + 1)
    rs: deque = deque(maxlen=cfg.memory + 1)
    r0 = None
    for it in range(1, cfg.max_iters):
        r = np.clip(x - step * grad, lo, hi) - x
        rnorm = np.linalg.norm(r)
        if r0 is None:
            r0 = rnorm
        if rnorm <= cfg.grad_tol * r0 or rnorm == 0:
            log.status = "converged"
            break
        xs.append(x.copy())
        rs.append(r.copy())
        x_plain = np.clip(x + beta * r, lo, hi)
        x_new = x_plain
        if cfg.memory > 0 and len(xs) > 1:
            dX = np.diff(np.array(xs).reshape(len(xs), -1), axis=0).T
            dR = np.diff(np.array(rs).reshape(len(rs), -1), axis=0).T
            gram = dR.T @ dR
            gram += cfg.regularization * np.trace(gram) * np.eye(gram.shape[0])
            gamma = np.linalg.lstsq(gram, dR.T @ r.ravel(), rcond=None)[0]
            x_new = np.clip(x + beta * r - ((dX + beta * dR) @ gamma).reshape(x.shape), lo, hi)
        new_value, new_grad = ev(x_new)
        if x_new is not x_plain and (not np.isfinite(new_value) or new_value > 10 * max(value, 0)):
            xs.clear()
            rs.clear()
            x_new = x_plain
            new_value, new_grad = ev(x_new)
        if not (np.isfinite(new_value) and np.all(np.isfinite(new_grad))):
            log.status = "non-finite"
            break
        x, value, grad = x_new, new_value, new_grad
        ev.record(log, it, x, value, grad)
    else:
        log.status = "max_iters"
    log.evaluations = ev.calls
    return _result(m0, x), log


def gradient_descent_run(obj: Callable, m0, step: float, max_iters: int, bounds=None,
                         m_true=None):
    """Projected gradient descent with a fixed step; same logging as ``anderson_run``."""
    if not step > 0 or max_iters < 1:
        raise ValueError("need step > 0 and max_iters >= 1")
    lo, hi = _bounds(bounds, np.shape(_start(m0)))
    x = np.clip(_start(m0), lo, hi)
    ev = _Evaluator(obj, m0, m_true)
    log = IterationLog()
    value, grad = ev(x)
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        raise FloatingPointError("objective is not finite at the starting model")
    ev.record(log, 0, x, value, grad)
    for it in range(1, max_iters):
        if not np.any(grad):
            log.status = "converged"
            break
        x_new = np.clip(x - step * grad, lo, hi)
        new_value, new_grad = ev(x_new)
        if not (np.isfinite(new_value) and np.all(np.isfinite(new_grad))):
            log.status = "non-finite"
            break
        x, value, grad = x_new, new_value, new_grad
        ev.record(log, it, x, value, grad)
    else:
        log.status = "max_iters"
    log.evaluations = ev.calls
    return _result(m0, x), log
