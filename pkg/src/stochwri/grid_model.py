"""Regular 2D grids, velocity models, the Gaussian-lens phantom and
transmission acquisition geometry.

Fields are stored as ``(nx, nz)`` arrays. Flattening in C order gives the
z-fastest node ordering used by the Helmholtz operator and by the binary
model format.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid2D:
    nx: int
    nz: int
    dx: float
    dz: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < 3 or self.nz < 3:
            raise ValueError(f"grid needs at least 3x3 nodes, got {self.nx}x{self.nz}")
        if not (self.dx > 0 and self.dz > 0):
            raise ValueError("grid spacing must be positive")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.nz)

    @property
    def size(self) -> int:
        return self.nx * self.nz

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.dx * np.arange(self.nx)

    @property
    def z(self) -> np.ndarray:
        return self.origin[1] + self.dz * np.arange(self.nz)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as two ``(nx, nz)`` arrays."""
        return np.meshgrid(self.x, self.z, indexing="ij")

    def contains(self, x: float, z: float) -> bool:
        x1 = self.origin[0] + self.dx * (self.nx - 1)
        z1 = self.origin[1] + self.dz * (self.nz - 1)
        return self.origin[0] <= x <= x1 and self.origin[1] <= z <= z1

    def nearest_node(self, x: float, z: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.origin[0]) / self.dx + 0.5))
        iz = int(math.floor((z - self.origin[1]) / self.dz + 0.5))
        return ix, iz

    def flat_index(self, ix, iz):
        return np.asarray(ix) * self.nz + np.asarray(iz)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class VelocityModel:
    grid: Grid2D
    v: np.ndarray

    def __post_init__(self):
        v = _frozen(self.v)
        if v.shape != self.grid.shape:
            raise ValueError(f"velocity shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("velocity must be finite and positive everywhere")
        object.__setattr__(self, "v", v)


@dataclass(frozen=True, eq=False)
class SlownessSqModel:
    """Squared slowness ``m = 1/v**2`` in s^2/m^2."""

    grid: Grid2D
    m: np.ndarray

    def __post_init__(self):
        m = _frozen(self.m)
        if m.shape != self.grid.shape:
            raise ValueError(f"model shape {m.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise ValueError("squared slowness must be finite and positive everywhere")
        object.__setattr__(self, "m", m)

    def velocity(self) -> VelocityModel:
        return VelocityModel(self.grid, self.m ** -0.5)


@dataclass(frozen=True)
class GaussianLensSpec:
    v_background: float = 2000.0
    amplitude: float = -400.0
    center: tuple[float, float] | None = None
    radius: float = 150.0

    def __post_init__(self):
        if self.v_background + self.amplitude <= 0:
            raise ValueError("lens peak velocity v_background + amplitude must be positive")
        if self.radius <= 0:
            raise ValueError("lens radius must be positive")


@dataclass(frozen=True, eq=False)
class Acquisition:
    """Point sources and receivers snapped to grid nodes."""

    grid: Grid2D
    sources: np.ndarray
    receivers: np.ndarray
    source_nodes: np.ndarray = field(init=False)
    receiver_nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        src = _frozen(np.atleast_2d(self.sources))
        rec = _frozen(np.atleast_2d(self.receivers))
        if src.shape[0] < 1 or rec.shape[0] < 1:
            raise ValueError("need at least one source and one receiver")
        nodes = []
        for pts in (src, rec):
            idx = []
            for x, z in pts:
                if not self.grid.contains(x, z):
                    raise ValueError(f"position ({x}, {z}) lies outside the grid")
                idx.append(self.grid.flat_index(*self.grid.nearest_node(x, z)))
            arr = np.array(idx, dtype=np.int64)
            arr.flags.writeable = False
            nodes.append(arr)
        object.__setattr__(self, "sources", src)
        object.__setattr__(self, "receivers", rec)
        object.__setattr__(self, "source_nodes", nodes[0])
        object.__setattr__(self, "receiver_nodes", nodes[1])

    @property
    def n_s(self) -> int:
        return self.sources.shape[0]

    @property
    def n_r(self) -> int:
        return self.receivers.shape[0]


def build_gaussian_lens(spec: GaussianLensSpec, grid: Grid2D) -> VelocityModel:
    """Background velocity plus a Gaussian bump of std ``spec.radius``.

    The lens is centered on the domain midpoint unless ``spec.center`` is set.
    """
    if spec.center is None:
        cx = grid.origin[0] + 0.5 * grid.dx * (grid.nx - 1)
        cz = grid.origin[1] + 0.5 * grid.dz * (grid.nz - 1)
    else:
        cx, cz = spec.center
    X, Z = grid.mesh()
    r2 = (X - cx) ** 2 + (Z - cz) ** 2
    v = spec.v_background + spec.amplitude * np.exp(-r2 / (2.0 * spec.radius ** 2))
    if np.any(v <= 0):
        raise ValueError("lens produces non-positive velocity")
    return VelocityModel(grid, v)


def homogeneous_model(grid: Grid2D, v: float) -> VelocityModel:
    return VelocityModel(grid, np.full(grid.shape, float(v)))


def velocity_to_slowness_sq(vm: VelocityModel) -> SlownessSqModel:
    return SlownessSqModel(vm.grid, 1.0 / (vm.v * vm.v))


def slowness_sq_to_velocity(sm: SlownessSqModel) -> VelocityModel:
    return sm.velocity()


def _equispaced_nodes(lo: int, hi: int, n: int) -> np.ndarray:
    # continuous equispacing between the band ends, then snapped to nodes
    if n == 1:
        pos = np.array([0.5 * (lo + hi)])
    else:
        pos = lo + np.arange(n) * (hi - lo) / (n - 1)
    return np.floor(pos + 0.5).astype(np.int64)


def build_transmission_acquisition(grid: Grid2D, n_s: int, n_r: int, inset: int = 0) -> Acquisition:
    """Sources on the left edge of the interior, receivers on the right edge.

    ``inset`` is the width (in nodes) of the absorbing band; the placement
    band starts one node inside it, so with ``inset=0`` the outermost grid
    lines are never used. Positions are spread evenly along z and snapped
    to nodes; when more positions than nodes are requested, several shots
    or receivers share a node.
    """
    if n_s < 1 or n_r < 1:
        raise ValueError("n_s and n_r must be at least 1")
    lo_z, hi_z = inset + 1, grid.nz - 2 - inset
    ix_src, ix_rec = inset + 1, grid.nx - 2 - inset
    if hi_z < lo_z or ix_rec <= ix_src:
        raise ValueError(
            f"grid {grid.nx}x{grid.nz} too small for a transmission layout with inset {inset}"
        )
    x0, z0 = grid.origin

    def place(ix, n):
        iz = _equispaced_nodes(lo_z, hi_z, n)
        return np.column_stack([np.full(n, x0 + ix * grid.dx), z0 + iz * grid.dz])

    return Acquisition(grid, place(ix_src, n_s), place(ix_rec, n_r))


def model_relative_error(m: SlownessSqModel, m_true: SlownessSqModel) -> float:
    if m.grid != m_true.grid:
        raise ValueError("models live on different grids")
    return float(np.linalg.norm(m.m - m_true.m) / np.linalg.norm(m_true.m))
