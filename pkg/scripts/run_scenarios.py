"""Run the three reference scenarios and write graphs, traces and histories.

    python3 scripts/run_scenarios.py [--out results] [--seed N]

For each scenario this writes <name>.dot (service graph at the final weights,
selected path highlighted), <name>.trace.csv and <name>.history.csv, then
prints the architecture changes and the final-window tracking error.
"""

import argparse
from dataclasses import replace
from pathlib import Path

from svcorch.catalog_io import load_catalog, load_scenario
from svcorch.config import PlantParams
from svcorch.plant_sim import DEFAULT_WEIGHTS, run_scenario
from svcorch.service_graph import create_service_graph, export_dot, format_cost
from svcorch.shortest_path import dijkstra

DATA = Path(__file__).resolve().parent.parent / "data"
SCENARIOS = ("scenario1", "scenario2", "scenario3")


def final_weights(scn):
    w = scn.weights or DEFAULT_WEIGHTS
    for ev in scn.events:
        if ev.kind == "weights_changed":
            w = ev.weights
    return w


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="results")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    catalog = load_catalog(DATA / "reference.catalog")
    params = PlantParams()

    for name in SCENARIOS:
        scn = load_scenario(DATA / f"{name}.scenario")
        if args.seed is not None:
            scn = replace(scn, seed=args.seed)
        g = create_service_graph(catalog, final_weights(scn))
        (out / f"{name}.dot").write_text(export_dot(g, dijkstra(g).nodes))

        res = run_scenario(scn, catalog, params=params)
        (out / f"{name}.trace.csv").write_text(res.trace_csv())
        (out / f"{name}.history.csv").write_text(res.history_csv())

        print(f"== {name}")
        for h in res.history:
            print(f"  t={format(h.t, 'g'):>5}  epoch {h.epoch}  {' -> '.join(h.path[1:-1])}  "
                  f"(cost {format_cost(h.total_cost)})")
        tail = [r for r in res.trace if r.t >= 0.8 * scn.duration]
        if tail:
            err = max(abs(r.levels[2] - scn.reference_at(r.t)) for r in tail)
            peak = max(r.levels[2] for r in res.trace)
            print(f"  final 20%: max |h3 - ref| = {err:.4f} m; peak h3 = {peak:.4f} m (limit {params.h_max})")
    print(f"written to {out}/")


if __name__ == "__main__":
    main()
