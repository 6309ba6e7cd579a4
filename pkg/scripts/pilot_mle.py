"""Pilot for the model-error thresholds: max TV of the MLE model at a few rounds.

Stationary default profile, W = tau = K. Prints per-seed errors over reachable
rows and over the whole table, so thresholds can be read off directly.

    python scripts/pilot_mle.py --seeds 10 --rounds 50 100 400
"""

import argparse

import numpy as np

from nsportal.config import ExperimentConfig, ScenarioSpec
from nsportal.env import Environment
from nsportal.experiment import build_world
from nsportal.metrics import max_tv_error
from nsportal.portal import PortalHyperparams, run_portal
from nsportal.rng import stream


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--K", type=int, default=600)
    ap.add_argument("--rounds", type=int, nargs="+", default=[10, 50, 100, 400])
    args = ap.parse_args()

    cfg = ExperimentConfig(scenario=ScenarioSpec(K=args.K))
    reach = np.zeros((args.seeds, len(args.rounds)))
    whole = np.zeros_like(reach)
    for seed in range(args.seeds):
        mc, sc = build_world(cfg, seed)
        env = Environment(sc, stream(seed, "exploration"), stream(seed, "evaluation"))
        log = run_portal(env, mc, PortalHyperparams(args.K, args.K, args.K), seed=seed)
        for j, k in enumerate(args.rounds):
            reach[seed, j] = max_tv_error(log.model_estimates[k - 1], sc.kernel(k))
            whole[seed, j] = max_tv_error(log.model_estimates[k - 1], sc.kernel(k), reachable_only=False)
        print(f"seed {seed}: reachable {np.round(reach[seed], 4)}  whole {np.round(whole[seed], 4)}")
    print("rounds        ", args.rounds)
    print("mean reachable", np.round(reach.mean(axis=0), 4))
    print("mean whole    ", np.round(whole.mean(axis=0), 4))
    for thr in (0.01, 0.05, 0.1):
        print(f"share below {thr}:", (reach < thr).mean(axis=0))


if __name__ == "__main__":
    main()
