"""Brute-force oracles and random catalogs for cross-checking the path search."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

from .cost_engine import CostWeights
from .service_graph import START, TARGET, LAYER_ORDER, ServiceGraph, create_service_graph
from .service_model import CostAttributes, Kind, Level, ModelComplexity, ServiceDescriptor
from .shortest_path import NoPathError, PathResult, dijkstra


def enumerate_paths(g: ServiceGraph, source: str = START, sink: str = TARGET) -> Iterator[tuple[str, ...]]:
    stack = [(source,)]
    while stack:
        path = stack.pop()
        if path[-1] == sink:
            yield path
            continue
        for e in g.out_edges(path[-1]):
            stack.append(path + (e.dest,))


def path_cost(g: ServiceGraph, path: tuple[str, ...]) -> float:
    weights = {(e.source, e.dest): e.weight for n in path[:-1] for e in g.out_edges(n)}
    cost = 0.0
    for edge in zip(path, path[1:]):
        cost += weights[edge]
    return cost


def brute_force_shortest(g: ServiceGraph) -> Optional[PathResult]:
    """Cheapest path by exhaustive enumeration, smallest node sequence on ties."""
    best = None
    stack = [(0.0, (START,))]
    while stack:
        cost, path = stack.pop()
        if path[-1] == TARGET:
            if best is None or (cost, path) < best:
                best = (cost, path)
            continue
        for e in g.out_edges(path[-1]):
            stack.append((cost + e.weight, path + (e.dest,)))
    return None if best is None else PathResult(best[1], best[0])


def layered_dp_cost(g: ServiceGraph) -> Optional[float]:
    """Minimum start-to-target cost by relaxing layer after layer."""
    dist = {START: 0.0}
    for kind in LAYER_ORDER[:-1]:
        for n in g.layer(kind):
            if n.id not in dist:
                continue
            for e in g.out_edges(n.id):
                c = dist[n.id] + e.weight
                if c < dist.get(e.dest, float("inf")):
                    dist[e.dest] = c
    return dist.get(TARGET)


def random_catalog(rng: random.Random, max_per_layer: int = 5, max_models: int = 3) -> list[ServiceDescriptor]:
    """Integer-attributed catalog with 1..max_per_layer services per layer."""

    def attrs():
        return CostAttributes(rng.randint(1, 20), rng.randint(1, 20))

    services: list[ServiceDescriptor] = []
    n_models = rng.randint(1, max_models)
    for i in range(n_models):
        level = rng.choice(list(Level))
        services.append(
            ServiceDescriptor(f"m{i}", Kind.MODEL, attrs=CostAttributes(rng.randint(1, 6), rng.randint(1, 20)),
                              complexity=ModelComplexity.of(level))
        )
    for prefix, kind in (("s", Kind.SENSOR), ("f", Kind.FILTER), ("c", Kind.CONTROLLER), ("a", Kind.ACTUATOR)):
        for i in range(rng.randint(1, max_per_layer)):
            needs_model = kind in (Kind.FILTER, Kind.CONTROLLER) and rng.random() < 0.5
            services.append(
                ServiceDescriptor(f"{prefix}{i}", kind, requires_model=needs_model,
                                  attrs=None if needs_model else attrs())
            )
    rng.shuffle(services)
    return services


def random_weights(rng: random.Random) -> CostWeights:
    return CostWeights(rng.randint(1, 50), rng.randint(1, 50))


@dataclass
class VerificationReport:
    count: int
    matched: int = 0
    no_path: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches and self.matched == self.count


Solver = Callable[[ServiceGraph], PathResult]


def run_verification(count: int, seed: int, solver: Solver = dijkstra) -> VerificationReport:
    """Cross-check `solver` against exhaustive enumeration on random catalogs."""
    rng = random.Random(seed)
    report = VerificationReport(count)
    for _ in range(count):
        catalog = random_catalog(rng)
        w = random_weights(rng)
        g = create_service_graph(catalog, w)
        expected = brute_force_shortest(g)
        try:
            got = solver(g)
        except NoPathError:
            got = None
        if expected == got:
            report.matched += 1
            report.no_path += expected is None
        else:
            report.mismatches.append((catalog, w, expected, got))
    return report
