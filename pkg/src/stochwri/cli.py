"""Command-line entry point: ``forward``, ``invert``, ``sweep`` and ``check``.

Every config key is also a flag, e.g. ``--grid.nx 61 --sketch.k 10``; flags
override values read with ``--config``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import config as cfgmod
from .checks import run_checks
from .experiments import run_forward, run_inversion, run_sweep


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochwri", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("forward", "simulate observed data for the true model"),
                        ("invert", "run one inversion method (over all sketch seeds)"),
                        ("sweep", "sketched inversions over (alpha, k), plus baselines"),
                        ("check", "run the built-in oracle checks on a tiny instance")]:
        sp = sub.add_parser(name, help=help_)
        if name == "check":
            sp.add_argument("--seed", type=int, default=0)
            continue
        sp.add_argument("--config", help="config file with 'section.key = value' lines")
        sp.add_argument("--downscale", type=int, metavar="N",
                        help="same physical extent on an N x N grid (sponge scaled to match)")
        sp.add_argument("-v", "--verbose", action="store_true")
        for key in cfgmod.keys():
            sp.add_argument(f"--{key}", dest=f"cfg:{key}", metavar="VALUE")
        if name == "sweep":
            sp.add_argument("--alphas", help="JSON list, overrides sweep.alphas")
            sp.add_argument("--ks", help="JSON list used for every alpha, or {alpha: list}")
    return p


def _config(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.ExperimentConfig()
    if args.downscale:
        width = max(1, round(cfg.boundary.width * (args.downscale - 1) / (cfg.grid.nx - 1)))
        cfg = cfgmod.downscaled(cfg, args.downscale, width)
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}
    return cfgmod.materialize(cfgmod.with_overrides(cfg, overrides))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "check":
        results = run_checks(args.seed)
        for r in results:
            print(r.line())
        return 0 if all(r.passed for r in results) else 1

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = _config(args)
    if args.command == "forward":
        info = run_forward(cfg)
        print(json.dumps(info, indent=2))
    elif args.command == "invert":
        art = run_inversion(cfg)
        print(json.dumps({k: art.summary[k] for k in
                          ("method", "alpha", "k", "mean_rel_err", "std_rel_err",
                           "total_pde_solves", "per_evaluation_pde_solves")}, indent=2))
        if art.failures:
            return 1
    else:
        alphas = json.loads(args.alphas) if args.alphas else None
        ks = json.loads(args.ks) if args.ks else None
        if isinstance(ks, dict):
            ks = {float(a): v for a, v in ks.items()}
        rows = run_sweep(cfg, alphas, ks)
        for row in rows:
            print(json.dumps(row))
    return 0


if __name__ == "__main__":
    sys.exit(main())
