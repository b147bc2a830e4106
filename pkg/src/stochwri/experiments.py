"""Gaussian-lens experiment: synthetic data, inversions and rank sweeps.

Output layout under ``output.dir``::

    config.txt              materialized configuration
    true_model.bin/.csv     true squared slowness
    data/data_<i>.bin       observed shot records, one file per frequency
    <tag>/                  one directory per (method, alpha, k) cell
        config.txt
        metrics.csv         one row per run
        summary.json
        mean_model.bin/.csv (sketched runs)
        seed_<s>/model.bin, model.csv, log.csv
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import io
from .config import ExperimentConfig
from .covariance import (
    DataCovariance,
    SourceCovarianceSpec,
    calibrate_sigma_d,
    sample_sketch,
    variance_fields,
)
from .grid_model import (
    GaussianLensSpec,
    Grid2D,
    SlownessSqModel,
    build_gaussian_lens,
    build_transmission_acquisition,
    homogeneous_model,
    model_relative_error,
    velocity_to_slowness_sq,
)
from .helmholtz import Sponge, assemble, factorize, pde_solve_count, point_sources, restrict
from .objectives import (
    ObjectiveReport,
    deterministic_wri_objective_gradient,
    fwi_objective_gradient,
    wariance_objective_gradient,
)
from .optimizer import AndersonConfig, anderson_run

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("alpha", "k", "seed", "final_value", "model_rel_err", "pde_solves", "iters",
                  "seconds")


@dataclass
class Problem:
    cfg: ExperimentConfig
    grid: Grid2D
    sponge: Sponge
    acq: object
    m_true: SlownessSqModel
    m_start: SlownessSqModel
    omegas: list[float]
    q: np.ndarray
    bounds: tuple[float, float]


def build_problem(cfg: ExperimentConfig) -> Problem:
    cfg = cfgmod.materialize(cfg)
    g = cfg.grid
    grid = Grid2D(g.nx, g.nz, g.dx, g.dz, (g.x0, g.z0))
    sponge = Sponge(cfg.boundary.width, cfg.boundary.strength)
    lens = cfg.lens
    v_true = build_gaussian_lens(
        GaussianLensSpec(lens.v_background, lens.amplitude, (lens.center_x, lens.center_z),
                         lens.radius), grid)
    acq = build_transmission_acquisition(grid, cfg.acquisition.n_s, cfg.acquisition.n_r,
                                         inset=sponge.width)
    m_true = velocity_to_slowness_sq(v_true)
    m_start = velocity_to_slowness_sq(homogeneous_model(grid, cfg.modeling.v_start))
    lo = 1.0 / (cfg.optimizer.v_high_factor * v_true.v.max()) ** 2
    hi = 1.0 / (cfg.optimizer.v_low_factor * v_true.v.min()) ** 2
    omegas = [2.0 * math.pi * f for f in cfg.modeling.frequencies]
    return Problem(cfg, grid, sponge, acq, m_true, m_start, omegas, point_sources(acq), (lo, hi))


def _outdir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output.dir)


def _write_model(path_stem: Path, grid: Grid2D, values: np.ndarray):
    io.write_model(path_stem.with_suffix(".bin"), grid, values)
    io.write_model_csv(path_stem.with_suffix(".csv"), grid, values)


def run_forward(cfg: ExperimentConfig) -> dict:
    """Simulate observed data for the true lens model and write it to disk."""
    cfg = cfgmod.materialize(cfg)
    prob = build_problem(cfg)
    out = _outdir(cfg)
    (out / "data").mkdir(parents=True, exist_ok=True)
    cfgmod.save(cfg, out / "config.txt")
    _write_model(out / "true_model", prob.grid, prob.m_true.m)
    start = pde_solve_count()
    rng = np.random.default_rng(cfg.modeling.noise_seed)
    files = []
    for i, (omega, freq) in enumerate(zip(prob.omegas, cfg.modeling.frequencies)):
        f = factorize(assemble(prob.m_true, omega, prob.sponge))
        d = restrict(f.solve(prob.q), prob.acq)
        if cfg.modeling.noise_level > 0:
            rms = np.sqrt(np.mean(np.abs(d) ** 2))
            noise = rng.standard_normal(d.shape + (2,)) @ np.array([1.0, 1j]) / np.sqrt(2.0)
            d = d + cfg.modeling.noise_level * rms * noise
        path = out / "data" / f"data_{i}.bin"
        io.write_shot_data(path, d, freq)
        files.append(str(path))
    return {"files": files, "pde_solves": pde_solve_count() - start}


def load_data(cfg: ExperimentConfig) -> list[np.ndarray]:
    out = _outdir(cfg)
    data = []
    for i, freq in enumerate(cfg.modeling.frequencies):
        path = out / "data" / f"data_{i}.bin"
        if not path.exists():
            raise FileNotFoundError(f"{path} missing; run the 'forward' step first")
        d, f_file = io.read_shot_data(path)
        if f_file != freq:
            raise ValueError(f"{path} holds {f_file} Hz data, config expects {freq} Hz")
        if d.shape != (cfg.acquisition.n_r, cfg.acquisition.n_s):
            raise ValueError(f"{path} has shape {d.shape}, config expects "
                             f"{(cfg.acquisition.n_r, cfg.acquisition.n_s)}")
        data.append(d)
    return data


def _source_spec(cfg: ExperimentConfig, alpha: float) -> SourceCovarianceSpec:
    c = cfg.covariance
    return SourceCovarianceSpec(c.kind, c.delta, alpha, c.scale)


def resolve_sigma_d(prob: Problem, fields) -> tuple[list[DataCovariance], int]:
    """Data covariance per frequency plus the PDE solves spent choosing it."""
    c = prob.cfg.covariance
    if c.sigma_d_sq != "auto":
        return [DataCovariance(float(c.sigma_d_sq))] * len(prob.omegas), 0
    start = pde_solve_count()
    covs = []
    for omega in prob.omegas:
        f = factorize(assemble(prob.m_start, omega, prob.sponge))
        covs.append(calibrate_sigma_d(f, prob.acq, fields, c.sigma_d_probes, c.sigma_d_seed,
                                      c.sigma_d_balance))
    return covs, pde_solve_count() - start


def per_evaluation_solves(method: str, n_s: int, n_r: int, k: int, n_freq: int) -> int:
    """PDE solves per objective evaluation for each method."""
    if method == "fwi":
        per = 2 * n_s
    elif method == "wariance":
        per = 2 * n_s + k * n_s
    else:
        per = n_s + n_r + n_s
    return per * n_freq


def make_objective(prob: Problem, data, method: str, sigma_ds, fields=None, sketch=None):
    """Objective summed over frequencies; redraw sketches advance per call."""
    calls = [0]

    def obj(m: SlownessSqModel) -> ObjectiveReport:
        total = None
        for d, omega, sd in zip(data, prob.omegas, sigma_ds):
            if method == "fwi":
                rep = fwi_objective_gradient(m, d, prob.q, sd, omega, prob.acq, prob.sponge)
            elif method == "wri":
                rep = deterministic_wri_objective_gradient(m, d, prob.q, fields, sd, omega,
                                                           prob.acq, prob.sponge)
            else:
                rep = wariance_objective_gradient(m, d, prob.q, sketch, sd, omega, prob.acq,
                                                  prob.sponge, iteration=calls[0])
            if total is None:
                total = rep
            else:
                total = ObjectiveReport(total.value + rep.value, total.gradient + rep.gradient,
                                        total.pde_solves + rep.pde_solves, method)
        calls[0] += 1
        return total

    return obj


@dataclass
class RunResult:
    seed: int | None
    model: SlownessSqModel
    log: object
    final_value: float
    model_rel_err: float
    pde_solves: int
    seconds: float
    status: str


@dataclass
class RunArtifacts:
    directory: Path
    method: str
    alpha: float | None
    k: int | None
    runs: list[RunResult] = field(default_factory=list)
    failures: dict = field(default_factory=dict)
    mean_model: SlownessSqModel | None = None
    summary: dict = field(default_factory=dict)


def _tag(method: str, alpha: float, k: int) -> str:
    if method == "fwi":
        return "fwi"
    if method == "wri":
        return f"wri_a{alpha:g}"
    return f"wariance_a{alpha:g}_k{k}"


def _fmt(x) -> str:
    return "" if x is None else repr(x)


def run_inversion(cfg: ExperimentConfig, data=None) -> RunArtifacts:
    """Invert the observed data with ``cfg.method`` from a homogeneous start.

    The sketched method runs once per seed with a sketch fixed (or redrawn,
    per ``sketch.mode``) from that seed; the mean final model across seeds is
    written alongside the per-seed results.
    """
    cfg = cfgmod.materialize(cfg)
    prob = build_problem(cfg)
    if data is None:
        data = load_data(cfg)
    method, alpha, k = cfg.method, cfg.covariance.alpha, cfg.sketch.k
    out = _outdir(cfg) / _tag(method, alpha, k)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.save(cfg, out / "config.txt")
    art = RunArtifacts(out, method, None if method == "fwi" else alpha,
                       k if method == "wariance" else None)

    fields = variance_fields(_source_spec(cfg, alpha), prob.acq, prob.sponge)
    sigma_ds, setup = resolve_sigma_d(prob, fields)
    o = cfg.optimizer
    acfg = AndersonConfig(o.memory, o.relaxation, o.step, o.max_iters, o.grad_tol,
                          o.regularization, o.normalize_step)
    seeds = list(cfg.sketch.seeds) if method == "wariance" else [None]
    for seed in seeds:
        sketch = None
        if seed is not None:
            sketch = sample_sketch(fields, k, seed, cfg.sketch.mode, cfg.sketch.complex_entries)
        obj = make_objective(prob, data, method, sigma_ds, fields, sketch)
        t0 = time.perf_counter()
        try:
            model, ilog = anderson_run(obj, prob.m_start, acfg, prob.bounds, prob.m_true)
        except (FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("run %s seed %s failed: %s", out.name, seed, exc)
            art.failures[seed] = str(exc)
            continue
        secs = time.perf_counter() - t0
        res = RunResult(seed, model, ilog, ilog.records[-1].value,
                        model_relative_error(model, prob.m_true), setup + ilog.pde_solves, secs,
                        ilog.status)
        art.runs.append(res)
        run_dir = out if seed is None else out / f"seed_{seed}"
        run_dir.mkdir(exist_ok=True)
        _write_model(run_dir / "model", prob.grid, model.m)
        ilog.to_csv(run_dir / "log.csv", wall_time=cfg.output.wall_time)
        log.info("%s seed=%s rel_err=%.4f", out.name, seed, res.model_rel_err)

    with open(out / "metrics.csv", "w") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for r in art.runs:
            row = [_fmt(art.alpha), _fmt(art.k), _fmt(r.seed), repr(r.final_value),
                   repr(r.model_rel_err), str(r.pde_solves), str(len(r.log)),
                   repr(r.seconds) if cfg.output.wall_time else ""]
            fh.write(",".join(row) + "\n")

    if art.runs and method == "wariance":
        mean = np.mean([r.model.m for r in art.runs], axis=0)
        art.mean_model = SlownessSqModel(prob.grid, mean)
        _write_model(out / "mean_model", prob.grid, mean)

    errs = np.array([r.model_rel_err for r in art.runs])
    per_eval = per_evaluation_solves(method, prob.acq.n_s, prob.acq.n_r, k, len(prob.omegas))
    art.summary = {
        "method": method,
        "alpha": art.alpha,
        "k": art.k,
        "r": None if art.k is None else art.k * prob.acq.n_s,
        "n_s": prob.acq.n_s,
        "n_r": prob.acq.n_r,
        "sigma_d_sq": [s.sigma_d_sq for s in sigma_ds],
        "setup_pde_solves": setup,
        "per_evaluation_pde_solves": per_eval,
        "runs": [
            {"seed": r.seed, "model_rel_err": r.model_rel_err, "final_value": r.final_value,
             "iters": len(r.log), "evaluations": r.log.evaluations, "pde_solves": r.pde_solves,
             "status": r.status,
             "pde_solves_match": r.pde_solves == setup + r.log.evaluations * per_eval}
            for r in art.runs
        ],
        "failures": {str(s): msg for s, msg in art.failures.items()},
        "mean_rel_err": float(errs.mean()) if errs.size else None,
        "std_rel_err": float(errs.std()) if errs.size else None,
        "mean_model_rel_err": (model_relative_error(art.mean_model, prob.m_true)
                               if art.mean_model is not None else None),
        "total_pde_solves": int(sum(r.pde_solves for r in art.runs)),
    }
    (out / "summary.json").write_text(json.dumps(art.summary, indent=2) + "\n")
    return art


def _ordering_ok(values, allowed_inversions: int = 1) -> bool:
    """Non-increasing sequence, tolerating ``allowed_inversions`` increases."""
    ups = sum(1 for a, b in zip(values, values[1:]) if b > a)
    return ups <= allowed_inversions


def ordering_checks(rows: list[dict]) -> dict:
    """The ordinal FWI / WRI / sketched-WRI comparisons for alpha = 1."""
    sk = sorted((r for r in rows if r["method"] == "wariance" and r["alpha"] == 1.0
                 and r["status"] == "ok"), key=lambda r: r["k"])
    fwi = next((r for r in rows if r["method"] == "fwi" and r["status"] == "ok"), None)
    wri = next((r for r in rows if r["method"] == "wri" and r["alpha"] == 1.0
                and r["status"] == "ok"), None)
    checks = {}
    if sk:
        best = sk[-1]
        errs = [r["mean_rel_err"] for r in sk]
        checks["rank_ordering"] = {"ks": [r["k"] for r in sk], "mean_rel_err": errs,
                                   "pass": _ordering_ok(errs)}
        if fwi is not None:
            ratio = fwi["mean_rel_err"] / best["mean_rel_err"]
            checks["fwi_vs_sketched"] = {"k": best["k"], "ratio": ratio, "pass": ratio >= 1.5}
        if wri is not None:
            ratio = best["mean_rel_err"] / wri["mean_rel_err"]
            checks["sketched_vs_wri"] = {"k": best["k"], "ratio": ratio, "pass": ratio <= 2.0}
    return checks


def run_sweep(cfg: ExperimentConfig, alphas=None, ks=None) -> list[dict]:
    """Sketched inversions over a grid of (alpha, k), averaged over seeds.

    ``ks`` is a list used for every alpha or a mapping ``alpha -> list``;
    defaults come from ``cfg.sweep``. With ``sweep.baselines`` FWI and
    deterministic WRI are run as well and the ordering checks are evaluated.
    Failed cells are recorded and do not stop the sweep.
    """
    cfg = cfgmod.materialize(cfg)
    alphas = list(cfg.sweep.alphas if alphas is None else alphas)
    if ks is None:
        ks = {1.0: list(cfg.sweep.ks_alpha1), 2.0: list(cfg.sweep.ks_alpha2)}
    if not alphas:
        raise ValueError("alphas must not be empty")
    per_alpha = {}
    for a in alphas:
        lst = list(ks.get(float(a), ks.get(a, []))) if isinstance(ks, dict) else list(ks)
        if not lst:
            raise ValueError(f"empty list of sketch sizes for alpha={a}")
        per_alpha[float(a)] = lst
    data = load_data(cfg)
    n_s = cfg.acquisition.n_s

    cells = []
    if cfg.sweep.baselines:
        cells.append(("fwi", 1.0, None))
        cells += [("wri", a, None) for a in per_alpha]
    cells += [("wariance", a, k) for a, lst in per_alpha.items() for k in lst]

    rows = []
    for method, a, k in cells:
        sub = replace(cfg, method=method, covariance=replace(cfg.covariance, alpha=a),
                      sketch=replace(cfg.sketch, k=k if k is not None else cfg.sketch.k))
        row = {"method": method, "alpha": a if method != "fwi" else None, "k": k,
               "r": None if k is None else k * n_s}
        try:
            art = run_inversion(sub, data)
            if not art.runs:
                raise RuntimeError("; ".join(art.failures.values()) or "no runs")
            row.update(n_runs=len(art.runs), mean_rel_err=art.summary["mean_rel_err"],
                       std_rel_err=art.summary["std_rel_err"],
                       mean_value=float(np.mean([r.final_value for r in art.runs])),
                       total_pde_solves=art.summary["total_pde_solves"], status="ok")
        except Exception as exc:  # keep the sweep going
            log.warning("cell %s alpha=%s k=%s failed: %s", method, a, k, exc)
            row.update(n_runs=0, mean_rel_err=None, std_rel_err=None, mean_value=None,
                       total_pde_solves=None, status=f"failed: {exc}")
        rows.append(row)

    out = _outdir(cfg)
    cols = ("method", "alpha", "k", "r", "n_runs", "mean_rel_err", "std_rel_err", "mean_value",
            "total_pde_solves", "status")
    with open(out / "sweep_summary.csv", "w", newline="") as fh:
        for a, lst in per_alpha.items():
            fh.write(f"# alpha={a:g}: r = " + ", ".join(f"{k}*n_s" for k in lst) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow(["" if row[c] is None else row[c] for c in cols])
    checks = ordering_checks(rows)
    (out / "checks.json").write_text(json.dumps(checks, indent=2) + "\n")
    return rows
