#!/usr/bin/env python3
"""Run the full mode x seed training matrix and print an Acc/IT table.

Compares plain federated averaging, the unverified secret-sharing baseline
(with and without the share-delay attacker), and the consensus-gated
defended workflow (with and without the attacker) over a common toy task.

Usage:
    python3 scripts/compare_modes.py [--seeds N] [--rounds R] [--out-dir D]
"""

import argparse
import json
import math
import os
import statistics
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from bftvss.dpml import MODES, TrainingConfig, run


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=5,
                        help="number of seeds per mode (default 5)")
    parser.add_argument("--rounds", type=int, default=30)
    parser.add_argument("--out-dir", default=None,
                        help="also write one result JSON per run")
    args = parser.parse_args()

    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)

    table = {}
    for mode in MODES:
        attackers = (3,) if mode.endswith("+acumpa") else ()
        accs, its = [], []
        for seed in range(args.seeds):
            config = TrainingConfig(mode=mode, attackers=attackers,
                                    rounds=args.rounds, seed=seed)
            result = run(config)
            accs.append(result.final_accuracy)
            its.append(result.it)
            if args.out_dir:
                path = os.path.join(args.out_dir, f"compare_{mode}_{seed}.json")
                with open(path, "w") as fh:
                    fh.write(json.dumps(result.to_dict(), sort_keys=True,
                                        indent=2) + "\n")
        table[mode] = (accs, its)

    width = max(len(m) for m in MODES)
    print(f"{'mode':{width}s}  {'Acc (mean +/- std)':20s}  IT")
    for mode in MODES:
        accs, its = table[mode]
        acc_mean = statistics.mean(accs)
        acc_std = statistics.stdev(accs) if len(accs) > 1 else 0.0
        finite = [v for v in its if not math.isinf(v)]
        if finite:
            it_mean = statistics.mean(finite)
            it_std = statistics.stdev(finite) if len(finite) > 1 else 0.0
            it_text = f"{it_mean:.1f} +/- {it_std:.1f}"
            if len(finite) < len(its):
                it_text += f" ({len(its) - len(finite)} never converged)"
        else:
            it_text = "inf (never converged)"
        print(f"{mode:{width}s}  {acc_mean:.3f} +/- {acc_std:.3f}       {it_text}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
