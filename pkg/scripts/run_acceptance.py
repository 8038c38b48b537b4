"""Run the acceptance criteria and print one line per criterion.

    python3 scripts/run_acceptance.py                # all ten
    python3 scripts/run_acceptance.py 1 2 5 10       # a subset
    python3 scripts/run_acceptance.py --json out.json
"""
import argparse
import json
import sys

from sebrw.acceptance import run_acceptance
from sebrw.config import ExperimentConfig


def main() -> int:
    p = argparse.ArgumentParser()
    p.add_argument("criteria", nargs="*", type=int)
    p.add_argument("--seed", type=int, default=ExperimentConfig().seed)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--json", help="also write the full results here")
    args = p.parse_args()
    results = run_acceptance(args.seed, args.workers, args.criteria or None,
                             progress=lambda m: print(m, file=sys.stderr, flush=True))
    for r in results:
        print(r.line())
    if args.json:
        with open(args.json, "w") as fh:
            json.dump([r.as_dict() for r in results], fh, indent=2, sort_keys=True)
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    raise SystemExit(main())
