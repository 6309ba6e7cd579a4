"""Run one or more experiment configs and print their summaries.

    python scripts/sweep.py configs/abrupt_switch.yaml --parallel 4
"""

import argparse
import csv
import sys

from nsportal.config import parse_config
from nsportal.experiment import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="+")
    ap.add_argument("--parallel", type=int, default=None)
    ap.add_argument("--out-dir", default=None)
    args = ap.parse_args()

    failed = False
    for path in args.configs:
        cfg = parse_config(path)
        res = run_experiment(cfg, out_dir=args.out_dir, parallel=args.parallel)
        failed |= not res.ok
        print(f"== {path} -> {res.out_dir}")
        for row in csv.DictReader(res.summary_path.open()):
            print(f"  {row['variant']:>12s}  n={row['n']:>3s}  gap_ave {float(row['gap_ave_mean']):.4f}"
                  f" +- {float(row['gap_ave_std']):.4f}  {row['oracle']}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
