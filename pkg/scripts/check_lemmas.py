"""Numerical lemma checks on random instances, with a per-regulariser breakdown
of the elliptical potential bound.

    python scripts/check_lemmas.py --instances 200 --sequences 2000
"""

import argparse
from collections import defaultdict

from nsportal.metrics import elliptical_potential, lemma_oracles, random_feature_sequence
from nsportal.rng import stream


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=200)
    ap.add_argument("--sequences", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rep = lemma_oracles(args.instances, stream(args.seed, "oracles"))
    print(f"simulation lemma     max residual {rep.simulation_max_residual:.2e}")
    print(f"bounded difference   min slack    {rep.bounded_difference_min_slack:.2e}")

    rng = stream(args.seed, "elliptical")
    tally = defaultdict(lambda: [0, 0])
    worst = {}
    for _ in range(args.sequences):
        d = int(rng.integers(1, 5))
        N = int(rng.integers(1, 501))
        for lam0 in (0.1, 0.5, 1.0, 2.0):
            lhs, _, rhs = elliptical_potential(random_feature_sequence(rng, d, N), lam0)
            tally[lam0][0] += 1
            if lhs > rhs + 1e-9:
                tally[lam0][1] += 1
                if lhs - rhs > worst.get(lam0, (0,))[0]:
                    worst[lam0] = (lhs - rhs, d, N)
    for lam0, (n, bad) in sorted(tally.items()):
        extra = f"  worst excess {worst[lam0][0]:.3f} at d={worst[lam0][1]}, N={worst[lam0][2]}" if bad else ""
        print(f"elliptical lam0={lam0:<4}: {bad}/{n} violations{extra}")


if __name__ == "__main__":
    main()
