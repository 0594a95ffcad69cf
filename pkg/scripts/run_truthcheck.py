#!/usr/bin/env python3
"""Empirical auction truthfulness check over 500 random instances."""

import argparse
import json
import sys
from pathlib import Path

from sensecourt.cli import cmd_truthcheck

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "truthcheck.json"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out/truthcheck")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    status = cmd_truthcheck(str(CONFIG), seed=args.seed, out=args.out)
    report = json.loads((Path(args.out) / "truthfulness.json").read_text())
    print(f"instances swept: {report['swept']}")
    print(f"max regret:      {report['max_regret']:.3e}")
    if report["counterexample"]:
        print("counterexample:", report["counterexample"])
    else:
        print("truthful bidding was optimal in every sweep")
    return status


if __name__ == "__main__":
    sys.exit(main())
