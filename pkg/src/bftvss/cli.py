"""Scenario runner CLI.

Verbs:
  run <scenario.json> [--seed N] [--mode M] [--out-dir D] [--trace]
  report <results.json ...> [--csv FILE]
  validate <scenario.json>

Scenario files are strict JSON: unknown keys anywhere are rejected before
anything runs.  Results are written as sorted-key JSON so identical runs
produce byte-identical files.  Exit status is 0 only if every in-file
assertion holds.
"""

from __future__ import annotations

import argparse
import glob as globmod
import json
import math
import os
import re
import statistics
import sys
from dataclasses import fields

from . import dpml, scenarios
from .dpml import TrainingConfig

OUT_DIR_ENV = "BFTVSS_OUT_DIR"

_NAME_RE = re.compile(r"^[A-Za-z0-9_-]+$")

_TRAINING_KEYS = {"name", "kind", "config", "assertions"}
_CONSENSUS_KEYS = {"name", "kind", "n", "script", "gst", "delta",
                   "request_time", "assertions"}
_CONFIG_KEYS = {f.name for f in fields(TrainingConfig)}
_TRAINING_ASSERTS = {"completes", "max_it", "min_final_accuracy",
                     "adaptive_never", "adaptive_every_round"}
_CONSENSUS_ASSERTS = {"safety", "all_committed", "commit_within", "max_view"}


class ScenarioError(Exception):
    pass


def _reject_unknown(given: dict, allowed: set, where: str):
    unknown = sorted(set(given) - allowed)
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {unknown}")


def load_scenario(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be an object")
    name = data.get("name")
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise ScenarioError(f"{path}: 'name' must match {_NAME_RE.pattern}")
    kind = data.get("kind")
    if kind == "training":
        _reject_unknown(data, _TRAINING_KEYS, path)
        config = data.get("config", {})
        if not isinstance(config, dict):
            raise ScenarioError(f"{path}: 'config' must be an object")
        _reject_unknown(config, _CONFIG_KEYS, f"{path}: config")
        _reject_unknown(data.get("assertions", {}), _TRAINING_ASSERTS,
                        f"{path}: assertions")
        try:
            _build_config(config)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"{path}: config: {exc}") from exc
    elif kind == "consensus":
        _reject_unknown(data, _CONSENSUS_KEYS, path)
        if data.get("script") not in scenarios.CONSENSUS_SCRIPTS:
            raise ScenarioError(
                f"{path}: 'script' must be one of {scenarios.CONSENSUS_SCRIPTS}")
        n = data.get("n")
        if not isinstance(n, int) or n != 3 * ((n - 1) // 3) + 1 or n < 4:
            raise ScenarioError(f"{path}: 'n' must satisfy n = 3f + 1, n >= 4")
        _reject_unknown(data.get("assertions", {}), _CONSENSUS_ASSERTS,
                        f"{path}: assertions")
    else:
        raise ScenarioError(f"{path}: 'kind' must be 'training' or 'consensus'")
    return data


def _build_config(raw: dict, seed=None, mode=None) -> TrainingConfig:
    cfg = dict(raw)
    if "attackers" in cfg:
        cfg["attackers"] = tuple(cfg["attackers"])
    if seed is not None:
        cfg["seed"] = seed
    if mode is not None:
        cfg["mode"] = mode
    config = TrainingConfig(**cfg)
    config.validate()
    return config


def _check(expected, actual, ok: bool) -> dict:
    return {"expected": expected, "actual": actual, "ok": bool(ok)}


def _training_assertions(asserts: dict, result: dpml.RunResult) -> dict:
    out = {}
    it = result.it
    rounds_run = len(result.metrics)
    for key, want in asserts.items():
        if key == "completes":
            out[key] = _check(want, True, True is want)
        elif key == "max_it":
            out[key] = _check(want, None if math.isinf(it) else int(it),
                              not math.isinf(it) and it <= want)
        elif key == "min_final_accuracy":
            out[key] = _check(want, result.final_accuracy,
                              result.final_accuracy >= want)
        elif key == "adaptive_never":
            out[key] = _check(want, sorted(result.adaptive_rounds),
                              (len(result.adaptive_rounds) == 0) is want)
        elif key == "adaptive_every_round":
            out[key] = _check(want, sorted(result.adaptive_rounds),
                              (len(result.adaptive_rounds) == rounds_run) is want)
    return out


def _consensus_assertions(asserts: dict, outcome: dict) -> dict:
    out = {}
    for key, want in asserts.items():
        if key == "safety":
            out[key] = _check(want, outcome["safety_ok"],
                              outcome["safety_ok"] is want)
        elif key == "all_committed":
            out[key] = _check(want, outcome["all_committed"],
                              outcome["all_committed"] is want)
        elif key == "commit_within":
            span = outcome["commit_span"]
            out[key] = _check(want, span, span is not None and span <= want)
        elif key == "max_view":
            out[key] = _check(want, outcome["max_view"],
                              outcome["max_view"] <= want)
    return out


def _write_json(path: str, payload: dict):
    with open(path, "w") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def run_scenario(path: str, seed=None, mode=None, out_dir=None,
                 trace: bool = False) -> int:
    scenario = load_scenario(path)
    out_dir = out_dir or os.environ.get(OUT_DIR_ENV, ".")
    os.makedirs(out_dir, exist_ok=True)
    name = scenario["name"]
    asserts = scenario.get("assertions", {})

    if scenario["kind"] == "training":
        try:
            config = _build_config(scenario.get("config", {}), seed=seed, mode=mode)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"{path}: config: {exc}") from exc
        result = dpml.run(config, collect_trace=trace)
        checks = _training_assertions(asserts, result)
        payload = result.to_dict()
        payload["scenario"] = name
        payload["kind"] = "training"
        payload["assertions"] = checks
        out_path = os.path.join(out_dir, f"{name}_{config.mode}_{config.seed}.json")
        if trace and result.trace is not None:
            result.trace.to_jsonl(os.path.join(
                out_dir, f"{name}_{config.mode}_{config.seed}.trace.jsonl"))
    else:
        if mode is not None:
            raise ScenarioError("--mode applies only to training scenarios")
        run_seed = 0 if seed is None else seed
        outcome = scenarios.run_consensus(
            n=scenario["n"], script=scenario["script"], seed=run_seed,
            gst=scenario.get("gst", 0), delta=scenario.get("delta", 1),
            request_time=scenario.get("request_time"))
        checks = _consensus_assertions(asserts, outcome)
        payload = dict(outcome)
        payload["schema_version"] = dpml.RESULT_SCHEMA_VERSION
        payload["scenario"] = name
        payload["kind"] = "consensus"
        payload["assertions"] = checks
        out_path = os.path.join(out_dir,
                                f"{name}_{scenario['script']}_{run_seed}.json")

    ok = all(c["ok"] for c in checks.values())
    payload["assertions_ok"] = ok
    _write_json(out_path, payload)
    print(out_path)
    for key, c in sorted(checks.items()):
        status = "ok" if c["ok"] else "FAIL"
        print(f"  {status:4s} {key}: expected {c['expected']!r}, got {c['actual']!r}")
    return 0 if ok else 1


# -- report -------------------------------------------------------------------

_COMPAT_KEYS = ("n", "f", "th", "rounds", "dim", "samples", "tau",
                "learning_rate")


def _fmt_it(values) -> str:
    finite = [v for v in values if v is not None]
    if not finite:
        return "inf"
    mean = statistics.mean(finite)
    std = statistics.stdev(finite) if len(finite) > 1 else 0.0
    tail = f" (+{len(values) - len(finite)} inf)" if len(finite) < len(values) else ""
    return f"{mean:.1f} +/- {std:.1f}{tail}"


def report(paths, csv_path=None) -> int:
    results = []
    for pattern in paths:
        matched = sorted(globmod.glob(pattern))
        if not matched and not os.path.exists(pattern):
            print(f"error: no results match {pattern!r}", file=sys.stderr)
            return 2
        for p in matched or [pattern]:
            with open(p) as fh:
                results.append(json.load(fh))
    training = [r for r in results if r.get("kind") == "training"]
    if not training:
        print("error: no training results to report", file=sys.stderr)
        return 2
    baseline_cfg = {k: training[0]["config"][k] for k in _COMPAT_KEYS}
    for r in training:
        cfg = {k: r["config"][k] for k in _COMPAT_KEYS}
        if cfg != baseline_cfg:
            print(f"error: result {r['scenario']}_{r['mode']}_{r['seed']} has "
                  f"incompatible config {cfg} vs {baseline_cfg}", file=sys.stderr)
            return 2
    by_mode: dict[str, list] = {}
    for r in training:
        by_mode.setdefault(r["mode"], []).append(r)
    rows = []
    for m in sorted(by_mode):
        group = by_mode[m]
        accs = [r["final_accuracy"] for r in group]
        its = [r["it"] for r in group]
        acc_mean = statistics.mean(accs)
        acc_std = statistics.stdev(accs) if len(accs) > 1 else 0.0
        rows.append((m, len(group), f"{acc_mean:.3f} +/- {acc_std:.3f}",
                     _fmt_it(its)))
    width = max(len(r[0]) for r in rows)
    print(f"{'mode':{width}s}  runs  Acc              IT")
    for m, count, acc, it in rows:
        print(f"{m:{width}s}  {count:4d}  {acc:15s}  {it}")
    if csv_path:
        with open(csv_path, "w") as fh:
            fh.write("mode,runs,acc,it\n")
            for m, count, acc, it in rows:
                fh.write(f"{m},{count},{acc},{it}\n")
        print(f"wrote {csv_path}")
    return 0


# -- entry point ----------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bftvss",
        description="Run and report desk-scale secret-sharing/consensus scenarios.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run one scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--mode", default=None)
    p_run.add_argument("--out-dir", default=None)
    p_run.add_argument("--trace", action="store_true")

    p_rep = sub.add_parser("report", help="summarize result files into a table")
    p_rep.add_argument("results", nargs="+")
    p_rep.add_argument("--csv", default=None)

    p_val = sub.add_parser("validate", help="schema-check a scenario file")
    p_val.add_argument("scenario")

    args = parser.parse_args(argv)
    try:
        if args.verb == "run":
            return run_scenario(args.scenario, seed=args.seed, mode=args.mode,
                                out_dir=args.out_dir, trace=args.trace)
        if args.verb == "report":
            return report(args.results, csv_path=args.csv)
        load_scenario(args.scenario)
        print(f"{args.scenario}: ok")
        return 0
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except dpml.WorkflowError as exc:
        print(f"error: workflow failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
