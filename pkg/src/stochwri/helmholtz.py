"""Frequency-domain acoustic wave operator on a regular 2D grid.

The operator is

    A(m) = L + omega**2 * diag(m * (1 + 1j * eta))

with ``L`` the 5-point Laplacian (zero Dirichlet data outside the grid) and
``eta`` a quadratic sponge ramp that is zero on the physical interior. A is
linear in ``m``, complex symmetric, and its discrete adjoint is its conjugate
transpose, so the adjoint solves below are exact at the discrete level.

Wavefields are complex arrays of shape ``(nx*nz, blocks)`` in z-fastest node
order; shot records are ``(n_r, blocks)``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid_model import Acquisition, Grid2D, SlownessSqModel


class SingularOperatorError(RuntimeError):
    """The Helmholtz system could not be factorized."""


class _SolveCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, n: int):
        with self._lock:
            self._count += n

    @property
    def count(self) -> int:
        with self._lock:
            return self._count

    def reset(self):
        with self._lock:
            self._count = 0


_counter = _SolveCounter()


def pde_solve_count() -> int:
    """Total number of right-hand sides solved since the last reset."""
    return _counter.count


def reset_pde_solve_count():
    _counter.reset()


@dataclass(frozen=True)
class Sponge:
    """Absorbing band: ``width`` nodes on every side, ramp ``strength*(d/width)**2``."""

    width: int = 20
    strength: float = 2.0

    def __post_init__(self):
        if self.width < 0 or self.strength < 0:
            raise ValueError("sponge width and strength must be non-negative")


def sponge_profile(grid: Grid2D, sponge: Sponge) -> np.ndarray:
    """Damping ``eta`` on the grid, shape ``(nx, nz)``."""
    if sponge.width == 0:
        return np.zeros(grid.shape)
    if 2 * sponge.width >= min(grid.nx, grid.nz):
        raise ValueError(f"sponge width {sponge.width} is at least half the grid extent")

    def ramp(n):
        i = np.arange(n)
        d = np.maximum(sponge.width - i, i - (n - 1 - sponge.width)).clip(min=0)
        return d / sponge.width

    px, pz = ramp(grid.nx), ramp(grid.nz)
    d = np.maximum(px[:, None], pz[None, :])
    return sponge.strength * d ** 2


def interior_mask(grid: Grid2D, sponge: Sponge) -> np.ndarray:
    """Boolean ``(nx, nz)`` mask of nodes outside the sponge band."""
    return sponge_profile(grid, sponge) == 0


def laplacian(grid: Grid2D) -> sp.csr_matrix:
    nx, nz = grid.shape
    n = grid.size
    cx, cz = 1.0 / grid.dx ** 2, 1.0 / grid.dz ** 2
    zdiag = np.full(n - 1, cz)
    # no coupling across the end of a z column
    zdiag[np.arange(1, nx) * nz - 1] = 0.0
    xdiag = np.full(n - nz, cx)
    main = np.full(n, -2.0 * cx - 2.0 * cz)
    return sp.diags([xdiag, zdiag, main, zdiag, xdiag], [-nz, -1, 0, 1, nz], format="csr")


@dataclass(frozen=True, eq=False)
class HelmholtzOperator:
    grid: Grid2D
    omega: float
    m: SlownessSqModel
    sponge: Sponge
    matrix: sp.csr_matrix

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u

    def apply_adjoint(self, u: np.ndarray) -> np.ndarray:
        return self.matrix.conj().T @ u


def assemble(m: SlownessSqModel, omega: float, sponge: Sponge = Sponge()) -> HelmholtzOperator:
    if not omega > 0:
        raise ValueError("omega must be positive")
    eta = sponge_profile(m.grid, sponge)
    mass = omega ** 2 * (m.m * (1.0 + 1j * eta)).ravel()
    A = (laplacian(m.grid).astype(np.complex128) + sp.diags(mass)).tocsr()
    if not np.all(np.isfinite(A.data)):
        raise ValueError("operator has non-finite entries")
    return HelmholtzOperator(m.grid, float(omega), m, sponge, A)


class Factorization:
    """Sparse LU of an assembled operator, reusable for any number of solves."""

    def __init__(self, op: HelmholtzOperator):
        self.op = op
        try:
            self._lu = splu(op.matrix.tocsc())
        except RuntimeError as exc:
            raise SingularOperatorError(str(exc)) from exc
        diag_u = self._lu.U.diagonal()
        piv = np.abs(diag_u)
        # zero pivot up to rounding: relative threshold n * eps
        if not np.all(np.isfinite(diag_u)) or piv.min() <= piv.size * np.finfo(float).eps * piv.max():
            raise SingularOperatorError("zero or non-finite pivot in LU factors")

    @property
    def n(self) -> int:
        return self.op.grid.size

    def _prepare(self, b):
        b = np.asarray(b, dtype=np.complex128)
        vec = b.ndim == 1
        if vec:
            b = b[:, None]
        if b.ndim != 2 or b.shape[0] != self.n:
            raise ValueError(f"right-hand side shape {b.shape} incompatible with {self.n} nodes")
        return b, vec

    def _solve(self, b, trans):
        b, vec = self._prepare(b)
        if b.shape[1] == 0:
            return b.copy()
        x = self._lu.solve(np.ascontiguousarray(b), trans=trans)
        _counter.add(b.shape[1])
        if not np.all(np.isfinite(x)):
            raise SingularOperatorError("solve produced non-finite values")
        return x[:, 0] if vec else x

    def solve(self, b):
        return self._solve(b, "N")

    def solve_adjoint(self, b):
        return self._solve(b, "H")


def factorize(op: HelmholtzOperator) -> Factorization:
    return Factorization(op)


def solve(f: Factorization, b: np.ndarray) -> np.ndarray:
    """Solve ``A u = b`` block by block; counts one PDE solve per column."""
    return f.solve(b)


def solve_adjoint(f: Factorization, b: np.ndarray) -> np.ndarray:
    return f.solve_adjoint(b)


def point_sources(acq: Acquisition, amplitude: complex = 1.0) -> np.ndarray:
    q = np.zeros((acq.grid.size, acq.n_s), dtype=np.complex128)
    q[acq.source_nodes, np.arange(acq.n_s)] = amplitude
    return q


def restrict(u: np.ndarray, acq: Acquisition) -> np.ndarray:
    return u[acq.receiver_nodes]


def restrict_adjoint(d: np.ndarray, acq: Acquisition) -> np.ndarray:
    d = np.asarray(d)
    u = np.zeros((acq.grid.size,) + d.shape[1:], dtype=np.result_type(d.dtype, np.complex128))
    # receivers sharing a node sum, keeping this the exact transpose of restrict
    np.add.at(u, acq.receiver_nodes, d)
    return u


def forward(m: SlownessSqModel, omega: float, q: np.ndarray, acq: Acquisition,
            sponge: Sponge = Sponge()) -> np.ndarray:
    """Shot data ``F(m) q = R A(m)^-1 q``."""
    f = factorize(assemble(m, omega, sponge))
    return restrict(f.solve(q), acq)


def gradient_correlation(ubar: np.ndarray, v: np.ndarray, omega: float) -> np.ndarray:
    """Zero-lag correlation ``-Re(omega**2 * sum_b ubar_b * conj(v_b))`` per node.

    Frequency-domain form of correlating the second time derivative of the
    forward field with the backward field. Returns a flat real vector.
    """
    ubar = np.asarray(ubar)
    v = np.asarray(v)
    if ubar.shape != v.shape:
        raise ValueError(f"wavefield shapes differ: {ubar.shape} vs {v.shape}")
    if ubar.ndim == 1:
        ubar, v = ubar[:, None], v[:, None]
    return -np.real(omega ** 2 * np.sum(ubar * np.conj(v), axis=1))
