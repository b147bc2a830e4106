"""Self-checks on a tiny instance, run by ``stochwri check``.

Each check compares an implementation path against an independent route
(dense matrices, finite differences, dot products) and reports pass/fail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .covariance import (
    DataCovariance,
    SourceCovarianceSpec,
    sample_sketch,
    variance_fields,
    woodbury_apply,
)
from .grid_model import (
    GaussianLensSpec,
    Grid2D,
    SlownessSqModel,
    build_gaussian_lens,
    build_transmission_acquisition,
    homogeneous_model,
    velocity_to_slowness_sq,
)
from .helmholtz import (
    Sponge,
    assemble,
    factorize,
    forward,
    interior_mask,
    point_sources,
    restrict,
    restrict_adjoint,
)
from .objectives import (
    deterministic_wri_objective_gradient,
    fwi_objective_gradient,
    wariance_objective_gradient,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def tiny_problem(n: int = 15, n_s: int = 2, n_r: int = 5, width: int = 3):
    grid = Grid2D(n, n, 10.0, 10.0)
    sponge = Sponge(width, 2.0)
    acq = build_transmission_acquisition(grid, n_s, n_r, inset=width)
    m_true = velocity_to_slowness_sq(build_gaussian_lens(
        GaussianLensSpec(2000.0, -300.0, None, 25.0), grid))
    m0 = velocity_to_slowness_sq(homogeneous_model(grid, 2000.0))
    omega = 2 * math.pi * 15.0
    q = point_sources(acq)
    d = forward(m_true, omega, q, acq, sponge)
    return grid, sponge, acq, m_true, m0, omega, q, d


def run_checks(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    grid, sponge, acq, m_true, m0, omega, q, d = tiny_problem()
    n = grid.size
    f = factorize(assemble(m0, omega, sponge))
    out = []

    worst = 0.0
    for _ in range(5):
        x, y = _crandn(rng, n), _crandn(rng, n)
        worst = max(worst, abs(np.vdot(f.solve(x), y) - np.vdot(x, f.solve_adjoint(y)))
                    / (np.linalg.norm(x) * np.linalg.norm(y)))
        xr, yr = _crandn(rng, n), _crandn(rng, acq.n_r)
        worst = max(worst, abs(np.vdot(restrict(xr, acq), yr) - np.vdot(xr, restrict_adjoint(yr, acq)))
                    / (np.linalg.norm(xr) * np.linalg.norm(yr)))
    out.append(CheckResult("adjoint identities (A^-1, R)", worst <= 1e-10, f"max rel gap {worst:.2e}"))

    worst = 0.0
    for k in (1, 3):
        sd = DataCovariance(float(rng.uniform(0.5, 2.0)))
        dz, rho = _crandn(rng, 7, k), _crandn(rng, 7)
        y = woodbury_apply(sd, dz, rho)
        dense = np.linalg.solve(sd.dense(7) + dz @ dz.conj().T, rho)
        worst = max(worst, np.linalg.norm(y - dense) / np.linalg.norm(dense))
    out.append(CheckResult("Woodbury vs dense inverse", worst <= 1e-12, f"max rel err {worst:.2e}"))

    fields = variance_fields(SourceCovarianceSpec(delta=10.0), acq, sponge)
    sd = DataCovariance(1e-3)
    rep = deterministic_wri_objective_gradient(m0, d, q, fields, sd, omega, acq, sponge)
    Fmat = restrict(f.solve(np.eye(n)), acq)
    gap = 0.0
    for s in range(acq.n_s):
        S = sd.dense(acq.n_r) + (Fmat * fields.values[s]) @ Fmat.conj().T
        rho = rep.rho[:, s]
        dense_val = 0.5 * np.vdot(rho, np.linalg.solve(S, rho)).real
        y = rep.y[:, s]
        lag = np.vdot(y, rho).real - 0.5 * np.vdot(S @ y, y).real
        half = 0.5 * np.vdot(y, rho).real
        gap = max(gap, abs(lag - dense_val) / abs(dense_val), abs(half - dense_val) / abs(dense_val))
    out.append(CheckResult("duality: misfit = Lagrangian = 1/2 Re<y, rho>", gap <= 1e-10,
                           f"max rel gap {gap:.2e}"))

    sketch = sample_sketch(fields, 2, seed + 1)
    mask = interior_mask(grid, sponge)
    objectives = {
        "fwi": (lambda m: fwi_objective_gradient(m, d, q, sd, omega, acq, sponge), 1e-5),
        "wri": (lambda m: deterministic_wri_objective_gradient(m, d, q, fields, sd, omega, acq,
                                                               sponge), 1e-4),
        "wariance": (lambda m: wariance_objective_gradient(m, d, q, sketch, sd, omega, acq,
                                                           sponge), 1e-4),
    }
    for name, (fn, tol) in objectives.items():
        g = fn(m0).gradient
        dm = rng.standard_normal(grid.shape) * mask
        h = 1e-6 * np.linalg.norm(m0.m) / np.linalg.norm(dm)
        fd = (fn(SlownessSqModel(grid, m0.m + h * dm)).value
              - fn(SlownessSqModel(grid, m0.m - h * dm)).value) / (2 * h)
        an = float(np.sum(g * dm))
        err = abs(fd - an) / abs(an)
        out.append(CheckResult(f"{name} gradient vs central differences", err <= tol,
                               f"rel err {err:.2e} (tol {tol:g})"))

    rep_f = fwi_objective_gradient(m0, d, q, sd, omega, acq, sponge)
    rep_s = wariance_objective_gradient(m0, d, q, sketch, sd, omega, acq, sponge)
    ok = rep_f.pde_solves == 2 * acq.n_s and rep_s.pde_solves == 2 * acq.n_s + sketch.r
    out.append(CheckResult("PDE-solve accounting", ok,
                           f"fwi {rep_f.pde_solves} (2n_s={2 * acq.n_s}), sketched "
                           f"{rep_s.pde_solves} (2n_s+r={2 * acq.n_s + sketch.r})"))
    return out
