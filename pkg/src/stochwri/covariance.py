"""Data and source covariances, the weighted norm, and random sketches of
the source covariance.

The source covariance is diagonal and block-diagonal over shots: shot ``s``
carries variances ``sigma2[s]`` on the grid nodes. A sketch replaces each
block by ``Z_s Z_s^*`` with ``Z_s = [z_1, ..., z_k] / sqrt(k)`` and
``z_j = sigma_s * g_j``, so that ``E[Z_s Z_s^*] = diag(sigma2[s])``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .grid_model import Acquisition, Grid2D
from .helmholtz import Factorization, Sponge, interior_mask, restrict_adjoint

KINDS = ("source_focusing", "depth_focusing", "uniform")


@dataclass(frozen=True)
class DataCovariance:
    """Homoscedastic data covariance ``sigma_d_sq * I``."""

    sigma_d_sq: float

    def __post_init__(self):
        if not self.sigma_d_sq > 0:
            raise ValueError("sigma_d_sq must be positive")

    def apply(self, x):
        return self.sigma_d_sq * np.asarray(x)

    def solve(self, x):
        return np.asarray(x) / self.sigma_d_sq

    def dense(self, n: int) -> np.ndarray:
        return self.sigma_d_sq * np.eye(n)


@dataclass(frozen=True, eq=False)
class LowRankCovariance:
    """``Sigma_d + D D^*`` for a tall ``(n, k)`` factor ``D``."""

    base: DataCovariance
    factor: np.ndarray

    def apply(self, x):
        x = np.asarray(x)
        return self.base.apply(x) + self.factor @ (self.factor.conj().T @ x)

    def solve(self, x):
        return woodbury_apply(self.base, self.factor, x)

    def dense(self) -> np.ndarray:
        n = self.factor.shape[0]
        return self.base.dense(n) + self.factor @ self.factor.conj().T


def woodbury_apply(sigma_d: DataCovariance, d_z: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Solve ``(Sigma_d + d_z d_z^*) y = rho`` through the Woodbury identity.

    Only the ``k x k`` capacitance matrix ``I + d_z^* Sigma_d^-1 d_z`` is
    factorized (Cholesky); it is Hermitian positive definite whenever
    ``Sigma_d`` is.
    """
    d_z = np.atleast_2d(np.asarray(d_z))
    rho = np.asarray(rho)
    w = sigma_d.solve(rho)
    if d_z.shape[1] == 0:
        return w
    wd = sigma_d.solve(d_z)
    cap = np.eye(d_z.shape[1]) + d_z.conj().T @ wd
    cap = 0.5 * (cap + cap.conj().T)
    try:
        c = scipy.linalg.cho_factor(cap)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("Woodbury capacitance matrix is not positive definite") from exc
    return w - wd @ scipy.linalg.cho_solve(c, d_z.conj().T @ w)


def weighted_norm_sq(x: np.ndarray, cov) -> float:
    """``<Sigma^-1 x, x>`` for a covariance exposing ``solve``."""
    x = np.asarray(x)
    val = np.vdot(cov.solve(x), x)
    if abs(val.imag) > 1e-8 * abs(val.real):
        raise ValueError("covariance does not look Hermitian: weighted norm is complex")
    return float(val.real)


@dataclass(frozen=True)
class SourceCovarianceSpec:
    kind: str = "source_focusing"
    delta: float = 10.0
    alpha: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown source covariance kind {self.kind!r}; expected one of {KINDS}")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not self.scale > 0:
            raise ValueError("scale must be positive")


def variance_field(spec: SourceCovarianceSpec, x_s, grid: Grid2D,
                   sponge: Sponge | None = None) -> np.ndarray:
    """Node variances ``sigma^2`` for one shot at position ``x_s``, shape ``(nx, nz)``.

    Entries on sponge nodes are zero so no equation error is admitted there.
    """
    X, Z = grid.mesh()
    if spec.kind == "source_focusing":
        base = (X - x_s[0]) ** 2 + (Z - x_s[1]) ** 2 + spec.delta ** 2
        field = spec.scale * base ** (-spec.alpha)
    elif spec.kind == "depth_focusing":
        depth = Z - grid.origin[1]
        field = spec.scale * (depth ** 2 + spec.delta ** 2) ** (-spec.alpha)
    else:
        field = np.full(grid.shape, spec.scale)
    if sponge is not None:
        field = np.where(interior_mask(grid, sponge), field, 0.0)
    return field


@dataclass(frozen=True, eq=False)
class VarianceField:
    """Per-shot variances, ``values`` of shape ``(n_s, nx*nz)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("variance field must be a finite non-negative (n_s, n) array")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n_s(self) -> int:
        return self.values.shape[0]

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.values)


def variance_fields(spec: SourceCovarianceSpec, acq: Acquisition,
                    sponge: Sponge | None = None) -> VarianceField:
    grid = acq.grid
    rows = [variance_field(spec, xs, grid, sponge).ravel() for xs in acq.sources]
    return VarianceField(np.array(rows))


@dataclass(frozen=True, eq=False)
class Sketch:
    """Random factor of the per-shot source covariance blocks.

    Columns are generated on demand from ``(seed, draw, shot)`` so blocks can
    be produced independently and reproducibly. ``mode='redraw'`` gives a
    fresh sample for every ``draw`` index; ``mode='fixed'`` ignores it.
    """

    std: np.ndarray
    k: int
    seed: int
    mode: str = "fixed"
    complex_entries: bool = True
    draw: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("sketch needs at least one column per shot")
        if self.mode not in ("fixed", "redraw"):
            raise ValueError(f"unknown sketch mode {self.mode!r}")

    @property
    def n_s(self) -> int:
        return self.std.shape[0]

    @property
    def r(self) -> int:
        return self.k * self.n_s

    def block(self, s: int) -> np.ndarray:
        """``Z_s`` of shape ``(n, k)``, including the ``1/sqrt(k)`` scaling."""
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, self.draw, s]))
        n = self.std.shape[1]
        if self.complex_entries:
            g = rng.standard_normal((self.k, n, 2))
            g = (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)
        else:
            g = rng.standard_normal((self.k, n)).astype(np.complex128)
        return (self.std[s] * g).T / np.sqrt(self.k)

    def at_iteration(self, iteration: int) -> Sketch:
        if self.mode == "fixed":
            return self
        return replace(self, draw=int(iteration))


def sample_sketch(sigma: VarianceField, k: int, seed: int, mode: str = "fixed",
                  complex_entries: bool = True) -> Sketch:
    return Sketch(sigma.std, int(k), int(seed), mode, complex_entries)


def calibrate_sigma_d(f: Factorization, acq: Acquisition, sigma: VarianceField,
                      n_probes: int = 5, seed: int = 0, balance: float = 1.0) -> DataCovariance:
    """Pick ``sigma_d^2`` comparable to the mean diagonal of ``F Sigma_q F^*``.

    Uses ``n_probes`` random receiver-side probes ``w`` (one adjoint solve
    each): ``E|sigma_s * F^* w|^2 = trace(F Sigma_s F^*)``. The result is the
    shot-averaged trace divided by ``n_r``, times ``balance``.
    """
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((acq.n_r, n_probes, 2))
    w = (w[..., 0] + 1j * w[..., 1]) / np.sqrt(2.0)
    g = f.solve_adjoint(restrict_adjoint(w, acq))
    energy = sigma.values @ (np.abs(g) ** 2)
    trace = energy.mean()
    return DataCovariance(balance * float(trace) / acq.n_r)
