#!/usr/bin/env python3
"""Write the built-in and canonical scenarios as JSON files under scenarios/."""

import argparse
from pathlib import Path

from dcs.scenario import BUILTIN, random_scenario
from dcs.violations import VIOLATIONS, canonical_scenario


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "scenarios"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenarios = [make() for make in BUILTIN.values()]
    scenarios += [canonical_scenario(m) for m in VIOLATIONS]
    scenarios += [random_scenario(0), random_scenario(1, crash_agent=True)]
    for s in scenarios:
        path = out / f"{s.name}.json"
        path.write_text(s.dumps(), encoding="utf-8")
        print(path)


if __name__ == "__main__":
    main()
