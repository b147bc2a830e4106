"""Experiment configuration as flat ``section.key = value`` text.

Values are JSON literals. ``materialize`` resolves every derived default
(lens center, delta, starting velocity) so the persisted file fully
describes a run.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path

from .covariance import KINDS

METHODS = ("fwi", "wri", "wariance")


@dataclass(frozen=True)
class GridConfig:
    nx: int = 101
    nz: int = 101
    dx: float = 10.0
    dz: float = 10.0
    x0: float = 0.0
    z0: float = 0.0


@dataclass(frozen=True)
class LensConfig:
    v_background: float = 2000.0
    amplitude: float = -700.0
    center_x: float | None = None
    center_z: float | None = None
    radius: float = 150.0


@dataclass(frozen=True)
class AcquisitionConfig:
    n_s: int = 50
    n_r: int = 201


@dataclass(frozen=True)
class BoundaryConfig:
    width: int = 20
    strength: float = 2.0


@dataclass(frozen=True)
class ModelingConfig:
    frequencies: tuple[float, ...] = (6.0,)
    # std of complex Gaussian noise added to the data, relative to the data rms
    noise_level: float = 0.0
    noise_seed: int = 0
    v_start: float | None = None


@dataclass(frozen=True)
class CovarianceConfig:
    kind: str = "source_focusing"
    delta: float | None = None
    alpha: float = 1.0
    scale: float = 1.0
    # "auto" calibrates against F Sigma_q F^* at the starting model
    sigma_d_sq: float | str = "auto"
    sigma_d_balance: float = 1.0
    sigma_d_probes: int = 5
    sigma_d_seed: int = 0


@dataclass(frozen=True)
class SketchConfig:
    k: int = 1
    mode: str = "fixed"
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    complex_entries: bool = True


@dataclass(frozen=True)
class OptimizerConfig:
    memory: int = 5
    relaxation: float = 1.0
    step: float = 0.05
    max_iters: int = 30
    grad_tol: float = 1e-6
    regularization: float = 1e-10
    normalize_step: bool = True
    v_low_factor: float = 0.7
    v_high_factor: float = 1.3


@dataclass(frozen=True)
class SweepConfig:
    alphas: tuple[float, ...] = (1.0, 2.0)
    ks_alpha1: tuple[int, ...] = (1, 10, 30, 50)
    ks_alpha2: tuple[int, ...] = (1, 2, 3, 4)
    baselines: bool = True


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "runs/default"
    wall_time: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "wariance"
    grid: GridConfig = field(default_factory=GridConfig)
    lens: LensConfig = field(default_factory=LensConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    modeling: ModelingConfig = field(default_factory=ModelingConfig)
    covariance: CovarianceConfig = field(default_factory=CovarianceConfig)
    sketch: SketchConfig = field(default_factory=SketchConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.covariance.kind not in KINDS:
            raise ValueError(f"covariance.kind must be one of {KINDS}")
        if self.sketch.mode not in ("fixed", "redraw"):
            raise ValueError("sketch.mode must be 'fixed' or 'redraw'")
        if not self.sketch.seeds:
            raise ValueError("sketch.seeds must not be empty")
        if not self.modeling.frequencies or min(self.modeling.frequencies) <= 0:
            raise ValueError("modeling.frequencies must be a non-empty list of positive values")
        sd = self.covariance.sigma_d_sq
        if isinstance(sd, str) and sd != "auto":
            raise ValueError("covariance.sigma_d_sq must be a number or 'auto'")


def _flatten(obj, prefix=""):
    for f in fields(obj):
        val = getattr(obj, f.name)
        key = f"{prefix}{f.name}"
        if is_dataclass(val):
            yield from _flatten(val, key + ".")
        else:
            yield key, val


def _encode(val) -> str:
    if isinstance(val, tuple):
        val = list(val)
    return json.dumps(val)


def to_text(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {_encode(v)}\n" for k, v in _flatten(cfg))


def keys() -> list[str]:
    return [k for k, _ in _flatten(ExperimentConfig())]


def _coerce(default, raw):
    if isinstance(default, tuple):
        if not isinstance(raw, list):
            raw = [raw]
        if default and isinstance(default[0], float):
            return tuple(float(v) for v in raw)
        return tuple(raw)
    if isinstance(default, bool) or isinstance(raw, (bool, str)) or raw is None:
        return raw
    if isinstance(default, float):
        return float(raw)
    return raw


def with_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Apply ``{"section.key": value}`` overrides; values may be JSON text."""
    for key, raw in overrides.items():
        if isinstance(raw, str):
            try:
                raw = json.loads(raw)
            except json.JSONDecodeError:
                pass  # bare string such as a path or a method name
        parts = key.split(".")
        if len(parts) == 1:
            if parts[0] not in {f.name for f in fields(cfg)} or is_dataclass(getattr(cfg, parts[0])):
                raise KeyError(f"unknown config key {key!r}")
            cfg = replace(cfg, **{parts[0]: _coerce(getattr(cfg, parts[0]), raw)})
            continue
        if len(parts) != 2 or not hasattr(cfg, parts[0]) or not is_dataclass(getattr(cfg, parts[0])):
            raise KeyError(f"unknown config key {key!r}")
        section = getattr(cfg, parts[0])
        if parts[1] not in {f.name for f in fields(section)}:
            raise KeyError(f"unknown config key {key!r}")
        section = replace(section, **{parts[1]: _coerce(getattr(section, parts[1]), raw)})
        cfg = replace(cfg, **{parts[0]: section})
    return cfg


def parse_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def from_text(text: str) -> ExperimentConfig:
    return with_overrides(ExperimentConfig(), parse_text(text))


def load(path) -> ExperimentConfig:
    return from_text(Path(path).read_text())


def save(cfg: ExperimentConfig, path):
    Path(path).write_text(to_text(cfg))


def materialize(cfg: ExperimentConfig) -> ExperimentConfig:
    """Fill in every default that depends on other settings."""
    g, lens = cfg.grid, cfg.lens
    if lens.center_x is None or lens.center_z is None:
        lens = replace(
            lens,
            center_x=lens.center_x if lens.center_x is not None else g.x0 + 0.5 * g.dx * (g.nx - 1),
            center_z=lens.center_z if lens.center_z is not None else g.z0 + 0.5 * g.dz * (g.nz - 1),
        )
    cov = cfg.covariance
    if cov.delta is None:
        cov = replace(cov, delta=float(g.dx))
    mod = cfg.modeling
    if mod.v_start is None:
        mod = replace(mod, v_start=float(lens.v_background))
    return replace(cfg, lens=lens, covariance=cov, modeling=mod)


def downscaled(cfg: ExperimentConfig, n: int = 61, width: int = 12) -> ExperimentConfig:
    """Same physical extent on an ``n x n`` grid with a ``width``-node sponge."""
    g = cfg.grid
    ext_x, ext_z = g.dx * (g.nx - 1), g.dz * (g.nz - 1)
    grid = replace(g, nx=n, nz=n, dx=ext_x / (n - 1), dz=ext_z / (n - 1))
    cov = replace(cfg.covariance, delta=None) if cfg.covariance.delta == g.dx else cfg.covariance
    return replace(cfg, grid=grid, boundary=replace(cfg.boundary, width=width), covariance=cov)
