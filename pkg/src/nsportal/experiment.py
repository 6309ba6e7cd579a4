"""Experiment orchestration: (variant x seed) cells, per-cell CSVs and a summary."""

from __future__ import annotations

import csv
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .ada import AdaConfig, run_ada_portal
from .config import ExperimentConfig, VariantSpec
from .env import Environment, ScenarioSequence, VariationBudgets, build_scenario, variation_budgets
from .learning import ModelClass, random_model_class
from .metrics import write_runlog_csv
from .portal import PortalHyperparams, run_portal
from .rng import stream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleTuning:
    W: int
    tau: int


def _clamped_floor(x: float, K: int) -> int:
    # small relative slack so exact powers like (K / K) ** (2/3) do not floor to 0
    return min(K, max(1, int(math.floor(x * (1.0 + 1e-12)))))


def oracle_tuning(budgets: VariationBudgets, d: int, H: int, K: int) -> OracleTuning:
    """Window and restart period tuned with the true variation budgets."""
    rep = budgets.delta_sqrtP + budgets.delta_phi
    pol = budgets.delta_P + budgets.delta_pi
    W = K if rep <= 0 else _clamped_floor((H * d * K / rep) ** (1.0 / 3.0), K)
    tau = K if pol <= 0 else _clamped_floor((K / pol) ** (2.0 / 3.0), K)
    return OracleTuning(W, tau)


def build_world(config: ExperimentConfig, seed: int) -> tuple[ModelClass, ScenarioSequence]:
    spec = config.scenario
    world_seed = spec.scenario_seed if spec.scenario_seed is not None else seed
    mc = random_model_class(spec.n_phi, spec.n_psi, spec.n_states, spec.n_actions, spec.horizon, spec.dim,
                            stream(world_seed, "class"), floor=spec.p_min * spec.n_states)
    scenario = build_scenario(spec.scenario_config(), mc, stream(world_seed, "scenario"))
    return mc, scenario


def run_cell(config: ExperimentConfig, variant: VariantSpec, seed: int):
    """One (variant, seed) run; returns (RunLog, scenario, (W, tau) label)."""
    mc, scenario = build_world(config, seed)
    K = config.scenario.K
    env = Environment(scenario, stream(seed, "exploration"), stream(seed, "evaluation"), n_eval=config.n_eval)
    if variant.kind == "ada":
        runlog = run_ada_portal(env, mc, K, stream(seed, "ada-master"),
                                AdaConfig(config.delta, config.c_lambda, config.n_eval, config.eta), seed=seed)
        return runlog, scenario, ("ada", "ada")
    if variant.kind == "oracle":
        # the only variant that is handed ground-truth budgets
        tuned = oracle_tuning(variation_budgets(scenario), scenario.dim, scenario.space.horizon, K)
        W, tau = tuned.W, tuned.tau
    else:
        W, tau = variant.resolve(K)
    hyper = PortalHyperparams(K, W, tau, config.eta, config.delta, config.c_lambda, config.n_eval,
                              variant.restart_mode)
    return run_portal(env, mc, hyper, seed=seed), scenario, (W, tau)


def _cell_job(args) -> dict:
    config, variant, seed, out_dir = args
    path = Path(out_dir) / f"runlog_{variant.name}_seed{seed}.csv"
    try:
        runlog, scenario, _ = run_cell(config, variant, seed)
        report = write_runlog_csv(path, runlog, scenario)
        return {"variant": variant.name, "seed": seed, "gap_ave": report.gap_ave, "path": str(path), "error": None}
    except Exception as exc:  # recorded per cell; the run as a whole reports failure
        log.error("cell %s/seed%d failed: %s", variant.name, seed, exc)
        return {"variant": variant.name, "seed": seed, "gap_ave": float("nan"), "path": None,
                "error": "".join(traceback.format_exception_only(type(exc), exc)).strip()}


@dataclass
class ExperimentResult:
    out_dir: Path
    cells: list
    summary_path: Path

    @property
    def ok(self) -> bool:
        return all(c["error"] is None for c in self.cells)

    @property
    def files(self) -> list[Path]:
        return sorted(Path(c["path"]) for c in self.cells if c["path"]) + [self.summary_path]


SUMMARY_COLUMNS = ["variant", "kind", "oracle", "n", "n_failed", "gap_ave_mean", "gap_ave_std"]


def run_experiment(config: ExperimentConfig, out_dir=None, parallel: Optional[int] = None) -> ExperimentResult:
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(config, v, s, str(out)) for v in config.variants for s in config.seeds]
    workers = parallel if parallel is not None else config.parallel
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_cell_job, jobs))
    else:
        cells = [_cell_job(j) for j in jobs]

    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for v in config.variants:
            vals = np.array([c["gap_ave"] for c in cells if c["variant"] == v.name and c["error"] is None])
            failed = sum(1 for c in cells if c["variant"] == v.name and c["error"] is not None)
            mean = repr(float(vals.mean())) if len(vals) else "nan"
            std = repr(float(vals.std(ddof=1))) if len(vals) > 1 else "nan"
            w.writerow([v.name, v.kind, "oracle" if v.kind == "oracle" else "", len(vals), failed, mean, std])
    return ExperimentResult(out, cells, summary_path)
