"""Command-line entry point: validate, solve, run, bench-channel.

Exit codes: 0 success, 1 infeasible or invalid input, 2 internal error.
Diagnostics and logs go to standard error; standard output carries only
the command's result (JSON for solve, CSV for bench-channel).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .placer import (BudgetExceededError, InfeasibleError, SolverOpts,
                     policy_cost, solve)
from .runtime import bench_channel
from .scenario_io import (Scenario, ScenarioError, parse_scenario, placements_to_json_obj,
                          trace_to_json_obj, write_report)
from .simulator import apply_capacity_delta, run

log = logging.getLogger("edgeorch")


def _load_scenario(path: str, lax: bool) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    return parse_scenario(text, lax=lax)


def _opts_from_args(scenario: Scenario, args) -> SolverOpts:
    return SolverOpts(
        solver=args.solver if args.solver is not None else scenario.policy.solver,
        max_nodes=args.max_nodes if args.max_nodes is not None else scenario.policy.max_nodes,
        max_evictions=(args.max_evictions if args.max_evictions is not None
                       else scenario.policy.max_evictions),
    )


def cmd_validate(args) -> int:
    _load_scenario(args.scenario, args.lax)
    log.info("scenario %s is valid", args.scenario)
    return 0


def cmd_solve(args) -> int:
    scenario = _load_scenario(args.scenario, args.lax)
    opts = _opts_from_args(scenario, args)
    events = sorted(scenario.events, key=lambda e: (e.at, e.seq))
    at = args.at_event if args.at_event is not None else len(events) - 1
    if not -1 <= at < len(events):
        raise ScenarioError(f"--at-event {at} out of range (scenario has {len(events)} events)")

    # Fold the event prefix into the admitted set without intermediate solves,
    # so an over-subscribed workload surfaces as an infeasible result rather
    # than being rejected along the way.
    topology = scenario.topology
    admitted: dict = {}
    for ev in events[: at + 1]:
        if ev.kind == "arrival":
            admitted[ev.app] = scenario.apps[ev.app]
        elif ev.kind == "departure":
            admitted.pop(ev.app, None)
        elif ev.kind == "capacity_delta":
            topology = apply_capacity_delta(topology, ev.site, ev.resource, ev.amount)
    try:
        placement = solve(topology, admitted.values(), opts=opts)
    except InfeasibleError as exc:
        print(json.dumps({"status": "infeasible", "violations": exc.violations},
                         indent=2, sort_keys=True))
        return 1
    cost = policy_cost(topology, admitted.values(), placement)
    print(json.dumps({
        "status": "ok",
        "placement": placement.to_json_obj(),
        "policy_cost": cost.to_json_obj(),
    }, indent=2, sort_keys=True))
    return 0


def cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario, args.lax)
    opts = _opts_from_args(scenario, args)
    trace = run(scenario.topology, scenario.apps, list(scenario.events), opts=opts)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.csv").write_text(write_report(trace), encoding="utf-8")
    (out_dir / "trace.json").write_text(
        json.dumps(trace_to_json_obj(trace), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    (out_dir / "placements.json").write_text(
        json.dumps(placements_to_json_obj(trace), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    log.info("wrote trace.csv, trace.json, placements.json to %s", out_dir)
    return 0


def cmd_bench_channel(args) -> int:
    stats = bench_channel(args.capacity, args.payload, args.messages, policy=args.policy)
    cols = ["msgs_sent", "msgs_recv", "drops", "p50_latency_us", "p99_latency_us",
            "throughput_msgs_s"]
    print(",".join(cols))
    print(",".join(
        f"{stats[c]:.3f}" if isinstance(stats[c], float) else str(stats[c]) for c in cols
    ))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgeorch",
                                     description="Edge-cloud AI app orchestrator and simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("scenario", help="path to a scenario JSON file")
        p.add_argument("--lax", action="store_true",
                       help="warn on unknown scenario keys instead of rejecting")
        p.add_argument("--solver", choices=("exact", "greedy"), default=None)
        p.add_argument("--max-nodes", type=int, default=None,
                       help="branch-and-bound node budget")
        p.add_argument("--max-evictions", type=int, default=None,
                       help="greedy evict-and-replace budget")

    p = sub.add_parser("validate", help="parse and validate a scenario file")
    p.add_argument("scenario")
    p.add_argument("--lax", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve the placement after a given event")
    add_common(p)
    p.add_argument("--at-event", type=int, default=None,
                   help="0-based index of the last event to apply (default: all)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("run", help="simulate the full event timeline")
    add_common(p)
    p.add_argument("--out", default="out", help="output directory for trace files")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench-channel", help="SPSC channel micro-benchmark")
    p.add_argument("--capacity", type=int, default=1024)
    p.add_argument("--payload", type=int, default=64, help="payload size in bytes")
    p.add_argument("--messages", type=int, default=100_000)
    p.add_argument("--policy", choices=("Reject", "DropOldest"), default="Reject")
    p.set_defaults(func=cmd_bench_channel)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, InfeasibleError, BudgetExceededError,
            FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:  # pragma: no cover
        log.exception("internal error")
        return 2


if __name__ == "__main__":
    sys.exit(main())
