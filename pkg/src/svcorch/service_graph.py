"""Build the layered, weighted service graph from a catalog and render it as DOT."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .cost_engine import CostWeights, grouped_attributes, service_cost
from .service_model import (
    ContractError,
    Kind,
    Level,
    ServiceDescriptor,
    validate_catalog,
)

START = "start"
TARGET = "target"


class GraphConstructionError(ValueError):
    pass


class NodeKind(str, enum.Enum):
    START = "start"
    SENSOR = "sensor"
    FILTER = "filter"
    CONTROLLER = "controller"
    ACTUATOR = "actuator"
    TARGET = "target"


LAYER_ORDER = (
    NodeKind.START,
    NodeKind.SENSOR,
    NodeKind.FILTER,
    NodeKind.CONTROLLER,
    NodeKind.ACTUATOR,
    NodeKind.TARGET,
)
LAYER_INDEX = {k: i for i, k in enumerate(LAYER_ORDER)}


@dataclass(frozen=True)
class GraphNode:
    id: str
    kind: NodeKind
    base_service: Optional[str] = None
    model_service: Optional[str] = None
    # None means "no model"; only meaningful on filter/controller nodes
    effective_complexity: Optional[Level] = None
    node_cost: float = 0.0

    @property
    def layer(self) -> int:
        return LAYER_INDEX[self.kind]


@dataclass(frozen=True)
class GraphEdge:
    source: str
    dest: str
    weight: float


@dataclass(frozen=True)
class ServiceGraph:
    nodes: tuple[GraphNode, ...]
    edges: tuple[GraphEdge, ...]
    _by_id: dict = field(init=False, repr=False, compare=False)
    _out: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_id = {}
        for n in self.nodes:
            if n.id in by_id:
                raise GraphConstructionError(f"duplicate node id {n.id!r}")
            by_id[n.id] = n
        out: dict[str, list[GraphEdge]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            if e.source not in by_id or e.dest not in by_id:
                raise GraphConstructionError(f"edge {e.source}->{e.dest} has an unknown endpoint")
            out[e.source].append(e)
        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_out", {k: tuple(v) for k, v in out.items()})

    def node(self, node_id: str) -> GraphNode:
        return self._by_id[node_id]

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._by_id

    def out_edges(self, node_id: str) -> tuple[GraphEdge, ...]:
        return self._out[node_id]

    def layer(self, kind: NodeKind) -> list[GraphNode]:
        return [n for n in self.nodes if n.kind is kind]


def filter_controller_compatible(f: GraphNode, c: GraphNode) -> bool:
    """A filter may feed a controller iff its model is at least as complex.

    Model-free controllers accept any filter; a model-free filter cannot feed a
    model-based controller.
    """
    if f.kind is not NodeKind.FILTER or c.kind is not NodeKind.CONTROLLER:
        raise ContractError("filter_controller_compatible expects (filter, controller)")
    if c.effective_complexity is None:
        return True
    if f.effective_complexity is None:
        return False
    return f.effective_complexity >= c.effective_complexity


def grouped_node_id(base: str, model: str) -> str:
    return f"{base}+{model}"


def _service_nodes(
    services: Sequence[ServiceDescriptor],
    models: Sequence[ServiceDescriptor],
    kind: NodeKind,
    w: CostWeights,
) -> list[GraphNode]:
    nodes = []
    for s in services:
        if s.requires_model:
            if not models:
                raise GraphConstructionError(
                    f"{s.kind.value} {s.id!r} requires a model but the catalog has none"
                )
            for m in models:
                attrs = grouped_attributes(s.kind, m.attrs)
                nodes.append(
                    GraphNode(
                        grouped_node_id(s.id, m.id),
                        kind,
                        base_service=s.id,
                        model_service=m.id,
                        effective_complexity=m.complexity.level,
                        node_cost=service_cost(attrs, w),
                    )
                )
        else:
            nodes.append(GraphNode(s.id, kind, base_service=s.id, node_cost=service_cost(s.attrs, w)))
    return nodes


def create_service_graph(catalog: Iterable[ServiceDescriptor], w: CostWeights) -> ServiceGraph:
    """Compile a catalog into the start-to-target service graph.

    Every edge carries the cost of the node it points to, so a path's weight
    is the summed cost of the services it selects.
    """
    catalog = list(catalog)
    try:
        validate_catalog(catalog)
    except ContractError as exc:
        raise GraphConstructionError(str(exc)) from exc

    def of_kind(k: Kind) -> list[ServiceDescriptor]:
        return [s for s in catalog if s.kind is k]

    sensors, actuators, models = of_kind(Kind.SENSOR), of_kind(Kind.ACTUATOR), of_kind(Kind.MODEL)
    if not sensors:
        raise GraphConstructionError("catalog has no sensor: sensor layer is empty")
    if not actuators:
        raise GraphConstructionError("catalog has no actuator: actuator layer is empty")

    start = GraphNode(START, NodeKind.START)
    target = GraphNode(TARGET, NodeKind.TARGET)
    sensor_nodes = [
        GraphNode(s.id, NodeKind.SENSOR, base_service=s.id, node_cost=service_cost(s.attrs, w))
        for s in sensors
    ]
    filter_nodes = _service_nodes(of_kind(Kind.FILTER), models, NodeKind.FILTER, w)
    controller_nodes = _service_nodes(of_kind(Kind.CONTROLLER), models, NodeKind.CONTROLLER, w)
    actuator_nodes = [
        GraphNode(a.id, NodeKind.ACTUATOR, base_service=a.id, node_cost=service_cost(a.attrs, w))
        for a in actuators
    ]

    edges: list[GraphEdge] = []

    def connect(srcs, dests, allowed=lambda s, d: True):
        for d in dests:
            for s in srcs:
                if allowed(s, d):
                    edges.append(GraphEdge(s.id, d.id, d.node_cost))

    connect([start], sensor_nodes)
    connect(sensor_nodes, filter_nodes)
    connect(filter_nodes, controller_nodes, filter_controller_compatible)
    connect(controller_nodes, actuator_nodes)
    connect(actuator_nodes, [target])

    nodes = [start, *sensor_nodes, *filter_nodes, *controller_nodes, *actuator_nodes, target]
    return ServiceGraph(tuple(nodes), tuple(edges))


def format_cost(value: float) -> str:
    """Shortest exact text for a cost; integral values print without a fraction."""
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(g: ServiceGraph, highlight: Optional[Sequence[str]] = None) -> str:
    """Deterministic Graphviz text; nodes and edges on `highlight` are drawn red."""
    marked_nodes: set[str] = set()
    marked_edges: set[tuple[str, str]] = set()
    if highlight:
        for node_id in highlight:
            if node_id not in g:
                raise KeyError(f"highlighted node {node_id!r} is not in the graph")
        marked_nodes = set(highlight)
        marked_edges = set(zip(highlight, highlight[1:]))

    lines = ["digraph service_graph {", "  rankdir=LR;", "  node [shape=box];"]
    for n in g.nodes:
        attrs = f"label={_quote(f'{n.id} ({format_cost(n.node_cost)})')}"
        if n.id in marked_nodes:
            attrs += ", color=red, penwidth=2"
        lines.append(f"  {_quote(n.id)} [{attrs}];")
    for e in g.edges:
        attrs = f"label={_quote(format_cost(e.weight))}"
        if (e.source, e.dest) in marked_edges:
            attrs += ", color=red, penwidth=2"
        lines.append(f"  {_quote(e.source)} -> {_quote(e.dest)} [{attrs}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
