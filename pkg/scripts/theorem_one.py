#!/usr/bin/env python3
"""Convergence sweep: one scenario under many network seeds."""

import argparse
import sys

from dcs.experiments import theorem_one_sweep
from dcs.policy import by_name
from dcs.scenario import BUILTIN, load, random_scenario


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default="random:0", help="file, fig6a, fig6b or random:SEED")
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0, help="first network seed")
    ap.add_argument("--policy", default="fifo")
    ap.add_argument("--crash", action="store_true", help="crash one agent at tick 0 (random scenarios)")
    args = ap.parse_args()
    print(f"seed: {args.seed}")
    spec = args.scenario
    if spec.startswith("random:"):
        scenario = random_scenario(int(spec.split(":", 1)[1]), crash_agent=args.crash)
    elif spec in BUILTIN:
        scenario = BUILTIN[spec]()
    else:
        scenario = load(spec)
    report = theorem_one_sweep(scenario, args.seeds, args.seed, by_name(args.policy))
    print(report.text(), end="")
    for k, v in report.details.get("final_state", {}).items():
        print(f"final\t{k}\t{v}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
