"""Command-line driver: graph, orchestrate, simulate, verify."""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import shortest_path
from .catalog_io import ParseError, load_catalog, load_scenario, serialize_catalog
from .cost_engine import CostWeights
from .orchestrator import Architecture, EventError, Orchestrator, architecture_report
from .plant_sim import DEFAULT_WEIGHTS, SimulationError, run_scenario
from .service_graph import GraphConstructionError, create_service_graph, export_dot, format_cost
from .service_model import ContractError
from .shortest_path import NoPathError
from .verify import run_verification


class CliError(Exception):
    pass


def _weights(args, fallback: Optional[CostWeights] = None) -> CostWeights:
    base = fallback or DEFAULT_WEIGHTS
    alpha = args.alpha if args.alpha is not None else base.alpha_comp
    beta = args.beta if args.beta is not None else base.beta_inacc
    return CostWeights(alpha, beta)


def _write(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def cmd_graph(args) -> int:
    catalog = load_catalog(args.catalog)
    w = _weights(args)
    g = create_service_graph(catalog, w)
    path = shortest_path.dijkstra(g)
    if args.out:
        _write(args.out, export_dot(g, path.nodes))
    print(f"weights: alpha={format_cost(w.alpha_comp)} beta={format_cost(w.beta_inacc)}")
    print(f"graph: {len(g.nodes)} nodes, {len(g.edges)} edges")
    print("path: " + " -> ".join(path.nodes))
    for node_id in path.services:
        print(f"  {node_id:<24} {format_cost(g.node(node_id).node_cost)}")
    print(f"total cost: {format_cost(path.total_cost)}")
    return 0


ARCH_HEADER = ("t", "epoch", "status", "path", "node_costs", "total_cost", "wiring")


def _arch_row(t: float, arch: Architecture) -> list[str]:
    return [
        format(t, ".10g"),
        str(arch.epoch),
        "stale" if arch.stale else "active",
        " ".join(arch.path.nodes),
        " ".join(format_cost(c) for c in arch.node_costs),
        format_cost(arch.path.total_cost),
        "; ".join(str(c) for c in arch.wiring),
    ]


def cmd_orchestrate(args) -> int:
    catalog = load_catalog(args.catalog)
    scenario = load_scenario(args.scenario) if args.scenario else None
    w = _weights(args, scenario.weights if scenario else None)
    withheld = scenario.withheld if scenario else ()
    orch = Orchestrator.start([s for s in catalog if s.id not in withheld], w)
    if orch.architecture is None:
        raise CliError(f"orchestration failed: {orch.state.last_error}")
    rows = [_arch_row(0.0, orch.architecture)]
    print(architecture_report(orch.architecture), end="")
    for ev in scenario.events if scenario else ():
        new = orch.dispatch(ev.resolve(catalog))
        if new is not None:
            print(f"\n@ t={format(ev.time, 'g')} ({ev.kind})")
            print(architecture_report(new), end="")
            rows.append(_arch_row(ev.time, new))
        elif orch.architecture.stale:
            print(f"\n@ t={format(ev.time, 'g')} ({ev.kind}) failed: {orch.state.last_error}", file=sys.stderr)
            rows.append(_arch_row(ev.time, orch.architecture))
    if args.out:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(ARCH_HEADER)
        writer.writerows(rows)
        _write(args.out, buf.getvalue())
    return 0


def cmd_simulate(args) -> int:
    catalog = load_catalog(args.catalog)
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    w = _weights(args, scenario.weights)
    result = run_scenario(scenario, catalog, w, timing=args.timing)
    _write(args.out, result.trace_csv())
    history = args.history or str(Path(args.out).with_suffix(".history.csv"))
    _write(history, result.history_csv())
    for h in result.history:
        print(f"t={format(h.t, 'g')} epoch={h.epoch} {h.status}: {' -> '.join(h.path)} "
              f"(cost {format_cost(h.total_cost)})")
    print(f"{len(result.trace)} steps written to {args.out}")
    return 0


# replaced in tests to check that the harness catches a faulty solver
solver = shortest_path.dijkstra


def cmd_verify(args) -> int:
    report = run_verification(args.count, args.seed, solver=lambda g: solver(g))
    print(f"{report.matched}/{report.count} match ({report.no_path} without any path)")
    if report.ok:
        return 0
    catalog, w, expected, got = report.mismatches[0]
    print(f"{len(report.mismatches)} mismatch(es); first offending catalog "
          f"(alpha={format_cost(w.alpha_comp)}, beta={format_cost(w.beta_inacc)}):", file=sys.stderr)
    print(serialize_catalog(catalog), file=sys.stderr, end="")
    print(f"expected {expected}\ngot      {got}", file=sys.stderr)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="svcorch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def weights(p):
        p.add_argument("--alpha", type=float, help="computation weight (default 1)")
        p.add_argument("--beta", type=float, help="inaccuracy weight (default 100)")

    p = sub.add_parser("graph", help="build the service graph and report the shortest path")
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", help="DOT file to write, shortest path highlighted")
    weights(p)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("orchestrate", help="select the architecture, optionally replaying scenario events")
    p.add_argument("--catalog", required=True)
    p.add_argument("--scenario")
    p.add_argument("--out", help="CSV architecture report")
    weights(p)
    p.set_defaults(func=cmd_orchestrate)

    p = sub.add_parser("simulate", help="run a closed-loop scenario on the three-tank plant")
    p.add_argument("--catalog", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="trace CSV")
    p.add_argument("--history", help="architecture history CSV (default: <out>.history.csv)")
    p.add_argument("--seed", type=int)
    p.add_argument("--timing", action="store_true", help="record wall-clock time per step")
    weights(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="cross-check Dijkstra against exhaustive enumeration")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ParseError, ContractError, GraphConstructionError, NoPathError, EventError,
            SimulationError, CliError) as exc:
        print(f"svcorch {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
