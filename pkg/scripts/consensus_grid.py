#!/usr/bin/env python3
"""Sweep the consensus harness over fault scripts, sizes, and seeds.

Checks agreement (no two honest replicas commit different digests for the
same slot) and progress (every honest replica commits within the expected
span after the global stabilization time) for each combination.

Usage:
    python3 scripts/consensus_grid.py [--seeds N] [--delta D]
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from bftvss.scenarios import CONSENSUS_SCRIPTS, run_consensus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--delta", type=int, default=2)
    parser.add_argument("--gst", type=int, default=100)
    args = parser.parse_args()

    failures = 0
    print(f"{'n':>3s} {'script':24s} {'seed':>4s} {'span':>5s} "
          f"{'max_view':>8s} safety")
    for n in (4, 7):
        for script in CONSENSUS_SCRIPTS:
            for seed in range(args.seeds):
                out = run_consensus(n=n, script=script, seed=seed,
                                    gst=args.gst, delta=args.delta)
                ok = out["safety_ok"] and out["all_committed"]
                if not ok:
                    failures += 1
                print(f"{n:3d} {script:24s} {seed:4d} "
                      f"{out['commit_span']!s:>5s} {out['max_view']:8d} "
                      f"{'ok' if ok else 'FAIL'}")
    f_bound = (7 - 1) // 3
    print(f"\nprogress bound reference: 10 * delta * (f+1) = "
          f"{10 * args.delta * (f_bound + 1)} ticks at n=7")
    if failures:
        print(f"{failures} failing combinations")
        return 1
    print("all combinations safe and live")
    return 0


if __name__ == "__main__":
    sys.exit(main())
