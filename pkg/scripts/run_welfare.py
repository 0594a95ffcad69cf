#!/usr/bin/env python3
"""Welfare comparison against the offline bound at desk scale.

Runs the policy sweep of configs/welfare_desk.json (queue policy at three
phi values, the truthful auction, dual decomposition, RADP-VPC at three
alpha values, greedy, random), then the offline benchmark on the same
scenario, and prints each policy's average welfare next to the dual upper
bound and the incentive cost.
"""

import argparse
import json
import sys
from pathlib import Path

from sensecourt.cli import cmd_benchmark, cmd_simulate

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "welfare_desk.json"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/welfare_desk")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    status = cmd_simulate(str(CONFIG), seed=args.seed, out=args.out)
    if status == 0:
        status = cmd_benchmark(str(CONFIG), seed=args.seed, out=args.out)
    if status != 0:
        return status

    summary = json.loads((Path(args.out) / "summary.json").read_text())
    bench = json.loads((Path(args.out) / "benchmark.json").read_text())
    bound = bench["dual_upper_bound"]
    print(f"unconstrained optimum: {bench['unconstrained']:.3f}")
    print(f"dual upper bound:      {bound:.3f}")
    print(f"incentive cost:        {bench['incentive_cost']:.3%}\n")
    print(f"{'policy':<22}{'avg welfare':>12}{'vs bound':>10}{'dropped':>9}")
    for run, s in summary["runs"].items():
        rel = s["avg_welfare"] / bound if bound > 0 else float("nan")
        print(
            f"{s['policy']:<22}{s['avg_welfare']:>12.3f}{rel:>10.1%}"
            f"{s['dropping_fraction']:>9.2f}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
