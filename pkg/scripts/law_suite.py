#!/usr/bin/env python3
"""Run every law case and print one line per case; counterexamples go to --fixtures."""

import argparse
import sys
import time

from dcs.laws import ALL_CASES, coverage_gaps, run_law


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fixtures", help="directory for shrunk counterexamples")
    args = ap.parse_args()
    print(f"seed: {args.seed}")
    failed = 0
    for case in ALL_CASES:
        t0 = time.perf_counter()
        r = run_law(case, args.seed, args.fixtures)
        failed += not r.passed
        print(f"{r.line()}\t{case.description}\t{time.perf_counter() - t0:.2f}s")
    gaps = coverage_gaps()
    for g in gaps:
        print(f"coverage gap: {g}")
    return 1 if failed or gaps else 0


if __name__ == "__main__":
    sys.exit(main())
