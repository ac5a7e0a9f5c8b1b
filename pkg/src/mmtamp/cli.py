"""Command-line interface.

Subcommands:
  run       execute trials of a scenario (single seeded trial or a batch)
  plot      render trajectory and per-plan weight-mass figures from a trace
  validate  check a scenario file and its domain without running

Exit codes: 0 on success, 1 on task failure or time-out, 2 on config errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from mmtamp.aip import DomainError, load_domain, resolve_desired
from mmtamp.config import ConfigError, ScenarioConfig, load_scenario
from mmtamp.interface import CostKeyError, build_cost_database
from mmtamp.orchestrator import (
    aggregate,
    make_world,
    run_batch,
    run_benchmark,
    run_trial,
)


def _success_predicate(scenario: ScenarioConfig) -> dict:
    return {
        "kind": "observation_hold",
        "hold_ticks": scenario.hold_ticks,
        "observer_thresholds": scenario.thresholds,
    }


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.benchmark:
        stats = run_benchmark(scenario, iterations=args.benchmark_iterations)
        print(json.dumps(stats, indent=2, sort_keys=True))
        return 0

    single = args.seed is not None or args.trace is not None
    if single:
        seed = args.seed if args.seed is not None else scenario.base_seed
        trace_file = open(args.trace, "w") if args.trace else None
        try:
            summary, _ = run_trial(
                scenario, seed=seed, mode=args.mode,
                trace_file=trace_file, realtime=args.realtime,
            )
        finally:
            if trace_file:
                trace_file.close()
        payload = {
            "scenario": scenario.name,
            "mode": args.mode,
            "trial": summary.to_dict(),
            "success_predicate": _success_predicate(scenario),
        }
        print(json.dumps(payload, indent=2, sort_keys=True))
        if args.summary:
            Path(args.summary).write_text(json.dumps(payload, sort_keys=True))
        return 0 if summary.success else 1

    stats, summaries = run_batch(scenario, trials=args.trials, mode=args.mode)
    payload = {
        "scenario": scenario.name,
        "mode": args.mode,
        "aggregate": stats,
        "trials": [s.to_dict() for s in summaries],
        "success_predicate": _success_predicate(scenario),
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.summary:
        Path(args.summary).write_text(json.dumps(payload, sort_keys=True))
    return 0 if stats["success_rate"] == 1.0 else 1


def _cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    records = []
    with open(args.trace) as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if not records:
        print("trace is empty", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    planar = "robot" in records[0]["world"]
    fig, ax = plt.subplots(figsize=(6, 6))
    if planar:
        robot = [r["world"]["robot"] for r in records]
        obj = [r["world"]["object"] for r in records]
        ax.plot(*zip(*robot), label="robot", color="tab:blue")
        ax.plot(*zip(*obj), label="object", color="tab:purple")
        goal = records[-1]["world"]["goal"]
        ax.scatter([goal[0]], [goal[1]], marker="*", s=160, color="tab:green", label="goal")
        for r in records[:: max(1, len(records) // 40)]:
            for pos in r["world"]["dyn_obstacles"]:
                ax.scatter([pos[0]], [pos[1]], s=8, color="tab:red", alpha=0.3)
        ax.set_aspect("equal")
    else:
        ee = [r["world"]["ee"] for r in records]
        ax.plot([p[0] for p in ee], [p[2] for p in ee], label="ee (x-z)", color="tab:blue")
        cubes = records[-1]["world"]["cubes"]
        for i, c in enumerate(cubes):
            ax.scatter([c[0]], [c[2]], s=60, label=f"cube {i}")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]" if planar else "z [m]")
    ax.legend(loc="best", fontsize=8)
    ax.set_title("trajectory")
    fig.savefig(out / "trajectory.png", dpi=120, bbox_inches="tight")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 3.5))
    keys = sorted({p["key"] for r in records for p in r["per_plan"]})
    for key in keys:
        ts, mass = [], []
        for r in records:
            for p in r["per_plan"]:
                if p["key"] == key:
                    ts.append(r["t"])
                    mass.append(p["weight_mass"])
        ax.plot(ts, mass, label=key)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("global weight mass")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(loc="best", fontsize=8)
    fig.savefig(out / "weight_mass.png", dpi=120, bbox_inches="tight")
    plt.close(fig)
    print(f"wrote {out / 'trajectory.png'} and {out / 'weight_mass.png'}")
    return 0


def _cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    factors, templates = load_domain(scenario.domain_path)
    resolve_desired(scenario.desired_raw, factors)
    database = build_cost_database(scenario)
    for tmpl in templates:
        key = tmpl.cost_key
        if key not in database:
            raise CostKeyError(f"action '{tmpl.name}' refers to unknown cost_key '{key}'")
    make_world(scenario)
    print(f"scenario '{scenario.name}' ok: world={scenario.world}, "
          f"{len(templates)} actions, {len(factors)} factors")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mmtamp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("--scenario", required=True, help="scenario YAML file")
    p_run.add_argument("--trials", type=int, default=None, help="batch size (default from file)")
    p_run.add_argument("--seed", type=int, default=None, help="run a single trial at this seed")
    p_run.add_argument("--mode", choices=("push", "pull", "multimodal"), default="multimodal")
    p_run.add_argument("--trace", default=None, help="write a JSONL trace (single trial)")
    p_run.add_argument("--summary", default=None, help="write the summary JSON to a file")
    p_run.add_argument("--realtime", action="store_true", help="pace ticks to wall clock")
    p_run.add_argument("--benchmark", action="store_true",
                       help="measure controller iterations per second instead of running trials")
    p_run.add_argument("--benchmark-iterations", type=int, default=100)
    p_run.set_defaults(func=_cmd_run)

    p_plot = sub.add_parser("plot", help="plot a recorded trace")
    p_plot.add_argument("--trace", required=True)
    p_plot.add_argument("--out", required=True, help="output directory for figures")
    p_plot.set_defaults(func=_cmd_plot)

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("--scenario", required=True)
    p_val.set_defaults(func=_cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError, CostKeyError, FileNotFoundError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
