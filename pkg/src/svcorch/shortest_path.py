"""Deterministic Dijkstra over a service graph."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .service_graph import START, TARGET, ServiceGraph


class NoPathError(LookupError):
    def __init__(self, message: str, last_layer: str):
        super().__init__(message)
        self.last_layer = last_layer


@dataclass(frozen=True)
class PathResult:
    nodes: tuple[str, ...]
    total_cost: float

    @property
    def services(self) -> tuple[str, ...]:
        """Selected graph nodes without the synthetic start/target."""
        return self.nodes[1:-1]


def dijkstra(g: ServiceGraph, source: str = START, sink: str = TARGET) -> PathResult:
    """Minimum-weight path; equal-cost paths resolve to the smallest node-id sequence.

    Labels are (cost, path) pairs compared lexicographically. Because the graph
    is acyclic no path is a proper prefix of another path ending at the same
    node, so appending an edge preserves label order and the usual Dijkstra
    argument goes through for the composite label.
    """
    for n in (source, sink):
        if n not in g:
            raise KeyError(f"node {n!r} is not in the graph")
    best: dict[str, tuple[float, tuple[str, ...]]] = {source: (0.0, (source,))}
    heap = [(0.0, (source,))]
    done: set[str] = set()
    while heap:
        cost, path = heapq.heappop(heap)
        node = path[-1]
        if node in done:
            continue
        done.add(node)
        if node == sink:
            return PathResult(path, cost)
        for e in g.out_edges(node):
            if e.dest in done:
                continue
            label = (cost + e.weight, path + (e.dest,))
            if e.dest not in best or label < best[e.dest]:
                best[e.dest] = label
                heapq.heappush(heap, label)
    deepest = max(done, key=lambda n: g.node(n).layer)
    layer = g.node(deepest).kind.value
    raise NoPathError(f"{sink!r} unreachable from {source!r}; last reachable layer: {layer}", layer)
