"""Command-line entry point: ``eprcs simulate | reconstruct | analyze | sweep | replay``.

Exit codes: 0 success, 1 replay mismatch, 2 configuration error,
3 missing artifact, 4 solver divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, Diverged, InfeasibleGrid, MissingArtifact
from .config import ExperimentConfig, load
from .runs import cmd_analyze, cmd_reconstruct, cmd_simulate, cmd_sweep, replay

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_MISSING, EXIT_DIVERGED = 0, 1, 2, 3, 4


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="flat section.key = value config file")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seed", type=int, help="master seed; overrides the plan and acquisition seeds")
    p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    p.add_argument("--verbose", action="store_true", help="log solver progress")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="eprcs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate one acquisition into --out")
    rec = sub.add_parser("reconstruct", parents=[common], help="reconstruct both joints of a run")
    rec.add_argument("run_dir", type=Path)
    ana = sub.add_parser("analyze", parents=[common], help="steering and information analysis of a run")
    ana.add_argument("run_dir", type=Path)
    ana.add_argument("--thresholds", help="comma-separated threshold fractions")
    ana.add_argument("--exact", action="store_true", help="analyze the ground-truth joints instead")
    sub.add_parser("sweep", parents=[common], help="run the (M, flux, trial) sweep into --out")
    rep = sub.add_parser("replay", parents=[common], help="re-execute a run and compare its arrays")
    rep.add_argument("run_dir", type=Path)
    return parser


def _overrides(items) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _resolve_config(args) -> ExperimentConfig:
    cfg = load(args.config) if args.config else ExperimentConfig()
    sets = _overrides(args.set)
    if args.seed is not None:
        plan_seed, sim_seed = np.random.SeedSequence(args.seed).generate_state(2, dtype=np.uint32)
        sets.update({"plan.seed": int(plan_seed), "sim.seed": int(sim_seed), "sweep.master_seed": int(args.seed)})
    if args.verbose:
        sets["solver.verbose"] = True
    return cfg.with_overrides(sets)


def _require_out(args) -> Path:
    if args.out is None:
        raise ConfigError(f"{args.command} needs --out")
    return args.out


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "simulate":
            path = cmd_simulate(_resolve_config(args), _require_out(args))
            print(path)
        elif args.command == "reconstruct":
            sets = _overrides(args.set)
            if args.verbose:
                sets["solver.verbose"] = "true"
            print(cmd_reconstruct(args.run_dir, sets))
        elif args.command == "analyze":
            thresholds = None
            if args.thresholds:
                try:
                    thresholds = [float(t) for t in args.thresholds.split(",")]
                except ValueError as exc:
                    raise ConfigError(f"bad --thresholds: {exc}") from exc
            path, _ = cmd_analyze(args.run_dir, thresholds, exact=args.exact)
            print(path)
        elif args.command == "sweep":
            path, cells = cmd_sweep(_resolve_config(args), _require_out(args), args.threads)
            failed = sum(1 for c in cells if c["error"])
            print(f"{path} ({len(cells)} cells, {failed} failed)")
        elif args.command == "replay":
            mismatched = replay(args.run_dir)
            if mismatched:
                print("replay mismatch: " + ", ".join(mismatched))
                return EXIT_MISMATCH
            print("replay identical")
    except (ConfigError, InfeasibleGrid) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except Diverged as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
