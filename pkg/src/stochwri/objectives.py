"""Objective values and gradients for FWI, source-focusing WRI and its
sketched (stochastic low-rank) variant.

All three share the structure

    f(m) = max_y  Re<y, rho(m)> - 1/2 <Sigma_tilde(m) y, y>,
    Sigma_tilde = Sigma_d + F(m) Sigma_q F(m)^*,

with ``rho = d - F(m) q``. FWI is ``Sigma_q = 0``; the deterministic WRI
path forms ``Sigma_tilde`` densely per shot; the sketched path replaces
``Sigma_q`` by ``Z Z^*`` and eliminates ``y`` with the Woodbury identity.
At the optimal ``y`` the value is ``1/2 Re<y, rho>`` and, by the envelope
theorem, the gradient is ``Re(omega^2 * sum_s ubar_s * conj(F^* y_s))`` with
``ubar`` the augmented wavefield.

Inner products are ``<a, b> = sum conj(a) * b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .covariance import DataCovariance, Sketch, VarianceField, woodbury_apply
from .grid_model import Acquisition, SlownessSqModel
from .helmholtz import (
    Sponge,
    assemble,
    factorize,
    gradient_correlation,
    interior_mask,
    pde_solve_count,
    restrict,
    restrict_adjoint,
)

__all__ = [
    "ObjectiveReport",
    "residual",
    "fwi_objective_gradient",
    "woodbury_apply",
    "wariance_objective_gradient",
    "deterministic_wri_objective_gradient",
]


@dataclass
class ObjectiveReport:
    value: float
    gradient: np.ndarray
    pde_solves: int
    method: str
    rho: np.ndarray | None = field(default=None, repr=False)
    y: np.ndarray | None = field(default=None, repr=False)


def _check_real(val: complex, what: str) -> float:
    if abs(val.imag) > 1e-10 * max(abs(val.real), 1e-300):
        raise FloatingPointError(f"{what} has a non-negligible imaginary part: {val}")
    return float(val.real)


def residual(m: SlownessSqModel, d: np.ndarray, q: np.ndarray, omega: float,
             acq: Acquisition, sponge: Sponge = Sponge()) -> np.ndarray:
    """``rho = d - F(m) q``; one factorization, ``n_s`` solves."""
    f = factorize(assemble(m, omega, sponge))
    return np.asarray(d) - restrict(f.solve(q), acq)


def _finish(m, omega, ubar, ys, f, acq, sponge, value, method, start, rho):
    # backward field driven by -y, the derivative of the misfit w.r.t. predicted data
    v = f.solve_adjoint(restrict_adjoint(-ys, acq))
    g = gradient_correlation(ubar, v, omega).reshape(m.grid.shape)
    g = np.where(interior_mask(m.grid, sponge), g, 0.0)
    return ObjectiveReport(value, g, pde_solve_count() - start, method, rho, ys)


def fwi_objective_gradient(m: SlownessSqModel, d: np.ndarray, q: np.ndarray,
                           sigma_d: DataCovariance, omega: float, acq: Acquisition,
                           sponge: Sponge = Sponge()) -> ObjectiveReport:
    """``1/2 ||rho||^2_{Sigma_d}`` and its adjoint-state gradient (``2 n_s`` solves)."""
    start = pde_solve_count()
    f = factorize(assemble(m, omega, sponge))
    u = f.solve(q)
    rho = np.asarray(d) - restrict(u, acq)
    y = sigma_d.solve(rho)
    value = 0.5 * _check_real(np.vdot(y, rho), "FWI misfit")
    return _finish(m, omega, u, y, f, acq, sponge, value, "fwi", start, rho)


def wariance_objective_gradient(m: SlownessSqModel, d: np.ndarray, q: np.ndarray,
                                sketch: Sketch, sigma_d: DataCovariance, omega: float,
                                acq: Acquisition, sponge: Sponge = Sponge(),
                                iteration: int = 0) -> ObjectiveReport:
    """Sketched WRI objective and gradient.

    Per shot ``s``: solve for ``u_Z = A^-1 Z_s`` (``k`` solves), form
    ``d_Z = R u_Z``, get ``y_s`` from the Woodbury identity and build the
    augmented field ``ubar_s = u_s + u_Z (d_Z^* y_s)``. Total cost is
    ``2 n_s + k n_s`` PDE solves. In ``redraw`` mode the sketch is resampled
    from ``iteration``.
    """
    if sketch.n_s != acq.n_s:
        raise ValueError(f"sketch has {sketch.n_s} shots, acquisition has {acq.n_s}")
    sketch = sketch.at_iteration(iteration)
    start = pde_solve_count()
    f = factorize(assemble(m, omega, sponge))
    u = f.solve(q)
    rho = np.asarray(d) - restrict(u, acq)
    ys = np.empty_like(rho)
    ubar = np.empty_like(u)
    for s in range(acq.n_s):
        uz = f.solve(sketch.block(s))
        dz = restrict(uz, acq)
        ys[:, s] = woodbury_apply(sigma_d, dz, rho[:, s])
        ubar[:, s] = u[:, s] + uz @ (dz.conj().T @ ys[:, s])
    value = 0.5 * _check_real(np.vdot(ys, rho), "sketched WRI misfit")
    return _finish(m, omega, ubar, ys, f, acq, sponge, value, "wariance", start, rho)


def deterministic_wri_objective_gradient(m: SlownessSqModel, d: np.ndarray, q: np.ndarray,
                                         sigma: VarianceField, sigma_d: DataCovariance,
                                         omega: float, acq: Acquisition,
                                         sponge: Sponge = Sponge(),
                                         memory_budget: float = 2e9) -> ObjectiveReport:
    """Exact source-focusing WRI with dense per-shot ``Sigma_tilde``.

    ``G = A^-* R^*`` is shared by all shots (``n_r`` adjoint solves), so
    ``F Sigma_s F^* = G^* diag(sigma_s^2) G``. The augmented source is
    ``q + Sigma_q F^* y``, costing another ``n_s`` solves.
    """
    n, n_r = acq.grid.size, acq.n_r
    need = 16.0 * n * n_r * 2
    if need > memory_budget:
        raise MemoryError(f"dense WRI needs ~{need:.3g} bytes, budget is {memory_budget:.3g}")
    start = pde_solve_count()
    f = factorize(assemble(m, omega, sponge))
    u = f.solve(q)
    rho = np.asarray(d) - restrict(u, acq)
    G = f.solve_adjoint(restrict_adjoint(np.eye(n_r), acq))
    # sponge nodes carry zero variance; skip them in the dense products
    support = np.flatnonzero(np.any(sigma.values > 0, axis=0))
    Gs = G[support]
    ys = np.empty_like(rho)
    for s in range(acq.n_s):
        S = sigma_d.dense(n_r) + Gs.conj().T @ (sigma.values[s, support][:, None] * Gs)
        S = 0.5 * (S + S.conj().T)
        ys[:, s] = scipy.linalg.cho_solve(scipy.linalg.cho_factor(S), rho[:, s])
    Fy = G @ ys
    ubar = u + f.solve(sigma.values.T * Fy)
    value = 0.5 * _check_real(np.vdot(ys, rho), "WRI misfit")
    # F^* y is already available through G, so the backward field needs no solves
    g = gradient_correlation(ubar, -Fy, omega).reshape(m.grid.shape)
    g = np.where(interior_mask(m.grid, sponge), g, 0.0)
    return ObjectiveReport(value, g, pde_solve_count() - start, "wri", rho, ys)

