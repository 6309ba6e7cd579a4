"""Command line entry point: ``nsportal run | oracles | budgets``.

Exit codes: 0 success, 1 a run failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from .config import parse_config
from .env import load_scenario, save_scenario, variation_budgets
from .errors import InvalidConfig, SchemaError
from .experiment import build_world, run_experiment
from .metrics import lemma_oracles
from .rng import stream

OUT_DIR_ENV = "NSPORTAL_OUT_DIR"


def _cmd_run(args) -> int:
    try:
        config = parse_config(args.config)
    except FileNotFoundError as exc:
        print(f"config not found: {exc}", file=sys.stderr)
        return 2
    except SchemaError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    if args.seed is not None:
        config = dataclasses.replace(config, seeds=(args.seed,))
    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV) or config.output_dir
    result = run_experiment(config, out_dir=out_dir, parallel=args.parallel)
    for cell in result.cells:
        status = "ok" if cell["error"] is None else f"FAILED: {cell['error']}"
        print(f"{cell['variant']:>16s} seed={cell['seed']:<4d} gap_ave={cell['gap_ave']:.6f} {status}")
    print(f"summary: {result.summary_path}")
    return 0 if result.ok else 1


def _cmd_oracles(args) -> int:
    report = lemma_oracles(args.n_instances, stream(args.seed, "oracles"))
    print(f"instances: {report.n_instances}")
    print(f"simulation lemma     max residual {report.simulation_max_residual:.3e}")
    print(f"bounded difference   min slack    {report.bounded_difference_min_slack:.3e}")
    print(f"elliptical potential max excess   {report.elliptical_max_excess:.3e}")
    for name, ok in report.passed.items():
        print(f"{name}: {'PASS' if ok else 'FAIL'}")
    return 0 if all(report.passed.values()) else 1


def _cmd_budgets(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except FileNotFoundError as exc:
        print(f"scenario not found: {exc}", file=sys.stderr)
        return 2
    except (InvalidConfig, KeyError, ValueError) as exc:
        print(f"bad scenario file: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"K": scenario.K, **variation_budgets(scenario).as_dict()}, indent=2))
    return 0


def _cmd_export(args) -> int:
    try:
        config = parse_config(args.config)
    except (FileNotFoundError, SchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    _, scenario = build_world(config, args.seed)
    save_scenario(scenario, args.output)
    print(args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsportal", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every (variant, seed) cell of a config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="run only this seed")
    run.add_argument("--out-dir", default=None, help=f"overrides ${OUT_DIR_ENV} and the config")
    run.add_argument("--parallel", type=int, default=None)
    run.set_defaults(func=_cmd_run)

    orc = sub.add_parser("oracles", help="numerical lemma checks on random instances")
    orc.add_argument("n_instances", type=int)
    orc.add_argument("--seed", type=int, default=0)
    orc.set_defaults(func=_cmd_oracles)

    bud = sub.add_parser("budgets", help="exact variation budgets of a scenario file")
    bud.add_argument("scenario")
    bud.set_defaults(func=_cmd_budgets)

    exp = sub.add_parser("export-scenario", help="write the scenario a config builds for one seed")
    exp.add_argument("config")
    exp.add_argument("output")
    exp.add_argument("--seed", type=int, default=0)
    exp.set_defaults(func=_cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
