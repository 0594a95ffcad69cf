#!/usr/bin/env python3
"""Desk-scale dropping experiment: who keeps their users?

Runs the four policies of configs/dropping_desk.json over 2000 slots of a
100-user, 2500-grid uniform scenario and prints the dropping fraction and
post-warmup welfare per policy. The queue-regulated policy should retain
everyone while greedy/random shed large fractions of the population.
"""

import argparse
import json
import sys
from pathlib import Path

from sensecourt.cli import cmd_simulate

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "dropping_desk.json"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/dropping_desk")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    status = cmd_simulate(str(CONFIG), seed=args.seed, out=args.out)
    if status != 0:
        return status
    summary = json.loads((Path(args.out) / "summary.json").read_text())
    print(f"{'policy':<22}{'dropped':>10}{'min prob':>10}{'avg welfare':>14}")
    for run, s in summary["runs"].items():
        print(
            f"{s['policy']:<22}{s['dropping_fraction']:>10.2f}"
            f"{s['min_alloc_prob']:>10.3f}{s['avg_welfare']:>14.2f}"
        )
    print(f"\nseries written under {args.out}/<policy>_rep0/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
