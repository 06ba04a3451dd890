"""Rebuild-and-select orchestration loop with wiring plans.

Every event (service added/removed/updated, weights changed) triggers a full
graph rebuild and a fresh shortest-path search.  A new architecture, with a
bumped epoch, is only issued when the selected node sequence changes.  When
orchestration fails, the last good architecture stays in place, flagged stale.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Union

from .cost_engine import CostWeights
from .service_graph import GraphConstructionError, GraphNode, ServiceGraph, create_service_graph, format_cost
from .service_model import Functionality, Kind, ServiceDescriptor
from .shortest_path import NoPathError, PathResult, dijkstra

# τ_ref is bound from configuration, not provided by a catalog service
REFERENCE_SOURCE = "reference"


class OrchestrationError(RuntimeError):
    pass


class WiringError(OrchestrationError):
    pass


class EventError(ValueError):
    """Event does not apply to the current catalog."""


@dataclass(frozen=True)
class ServiceAdded:
    service: ServiceDescriptor


@dataclass(frozen=True)
class ServiceRemoved:
    service_id: str


@dataclass(frozen=True)
class ServiceUpdated:
    service: ServiceDescriptor


@dataclass(frozen=True)
class WeightsChanged:
    weights: CostWeights


OrchestrationEvent = Union[ServiceAdded, ServiceRemoved, ServiceUpdated, WeightsChanged]


@dataclass(frozen=True)
class Connection:
    provider: str
    guarantee: Functionality
    consumer: str
    requirement: Functionality

    def __str__(self):
        return f"{self.provider}.{self.guarantee.value} -> {self.consumer}.{self.requirement.value}"


@dataclass(frozen=True)
class Architecture:
    path: PathResult
    wiring: tuple[Connection, ...]
    epoch: int
    selected: tuple[GraphNode, ...] = ()
    stale: bool = False

    @property
    def services(self) -> tuple[str, ...]:
        return self.path.services

    @property
    def node_costs(self) -> tuple[float, ...]:
        return tuple(n.node_cost for n in self.selected)


def _role_services(path: Sequence[str], graph: ServiceGraph) -> list[tuple[Kind, str, Optional[str]]]:
    roles = []
    for node_id in path[1:-1]:
        node = graph.node(node_id)
        roles.append((Kind(node.kind.value), node.base_service, node.model_service))
    return roles


def wiring_plan(
    path: Sequence[str], catalog: Iterable[ServiceDescriptor], graph: ServiceGraph
) -> tuple[Connection, ...]:
    """Connect every requirement of every selected service to one provider.

    The dataflow includes links the graph leaves out: the controller feeds its
    input back to the filter, and each grouped node receives its model.
    """
    by_id = {s.id: s for s in catalog}
    roles = _role_services(path, graph)
    provider_of_kind = {kind: base for kind, base, _ in roles}
    upstream = {
        Functionality.MEASUREMENT: Kind.SENSOR,
        Functionality.STATE_ESTIMATE: Kind.FILTER,
        Functionality.CONTROL_INPUT: Kind.CONTROLLER,
    }
    plan = []
    for kind, base, model in roles:
        consumer = by_id[base]
        for req in consumer.requirements:
            f = req.functionality
            if f is Functionality.REFERENCE:
                plan.append(Connection(REFERENCE_SOURCE, f, consumer.id, f))
                continue
            if f is Functionality.MODEL:
                provider_id = model
            else:
                provider_id = provider_of_kind.get(upstream[f])
            provider = by_id.get(provider_id) if provider_id else None
            if provider is None or provider is consumer or not provider.guarantees_functionality(f):
                raise WiringError(f"unsatisfiable requirement: {consumer.id} requires {f.value}")
            plan.append(Connection(provider.id, f, consumer.id, f))
    return tuple(plan)


def orchestrate(
    catalog: Iterable[ServiceDescriptor], weights: CostWeights, epoch: int = 1
) -> tuple[Architecture, ServiceGraph]:
    catalog = list(catalog)
    graph = create_service_graph(catalog, weights)
    path = dijkstra(graph)
    wiring = wiring_plan(path.nodes, catalog, graph)
    selected = tuple(graph.node(n) for n in path.services)
    return Architecture(path, wiring, epoch, selected), graph


@dataclass(frozen=True)
class OrchestratorState:
    catalog: tuple[ServiceDescriptor, ...]
    weights: CostWeights
    architecture: Optional[Architecture] = None
    last_error: Optional[str] = None

    @property
    def epoch(self) -> int:
        return self.architecture.epoch if self.architecture else 0

    def service(self, service_id: str) -> ServiceDescriptor:
        for s in self.catalog:
            if s.id == service_id:
                return s
        raise KeyError(service_id)


def apply_event(catalog: Sequence[ServiceDescriptor], weights: CostWeights, event: OrchestrationEvent):
    ids = [s.id for s in catalog]
    if isinstance(event, WeightsChanged):
        return tuple(catalog), event.weights
    if isinstance(event, ServiceAdded):
        if event.service.id in ids:
            raise EventError(f"service {event.service.id!r} already in the catalog")
        return tuple(catalog) + (event.service,), weights
    target = event.service_id if isinstance(event, ServiceRemoved) else event.service.id
    if target not in ids:
        raise EventError(f"service {target!r} is not in the catalog")
    if isinstance(event, ServiceRemoved):
        return tuple(s for s in catalog if s.id != target), weights
    return tuple(event.service if s.id == target else s for s in catalog), weights


def _run(state: OrchestratorState) -> tuple[OrchestratorState, Optional[Architecture]]:
    prev = state.architecture
    try:
        arch, _ = orchestrate(state.catalog, state.weights, epoch=state.epoch + 1)
    except (GraphConstructionError, NoPathError, OrchestrationError) as exc:
        stale = replace(prev, stale=True) if prev else None
        return replace(state, architecture=stale, last_error=str(exc)), None
    if prev is not None and prev.path.nodes == arch.path.nodes:
        # same selection: refresh costs/wiring under the current catalog, keep the epoch
        return replace(state, architecture=replace(arch, epoch=prev.epoch), last_error=None), None
    return replace(state, architecture=arch, last_error=None), arch


def initial_state(
    catalog: Iterable[ServiceDescriptor], weights: CostWeights
) -> tuple[OrchestratorState, Optional[Architecture]]:
    return _run(OrchestratorState(tuple(catalog), weights))


def handle_event(
    state: OrchestratorState, event: OrchestrationEvent
) -> tuple[OrchestratorState, Optional[Architecture]]:
    """Apply one event and re-orchestrate; returns the new architecture if the selection changed."""
    catalog, weights = apply_event(state.catalog, state.weights, event)
    return _run(replace(state, catalog=catalog, weights=weights))


@dataclass
class Orchestrator:
    """Single-writer holder of orchestration state.

    Events are applied one at a time under a lock; `architecture` hands out
    the current immutable snapshot.
    """

    state: OrchestratorState
    history: list = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def start(cls, catalog: Iterable[ServiceDescriptor], weights: CostWeights) -> "Orchestrator":
        state, arch = initial_state(catalog, weights)
        return cls(state, [arch] if arch else [])

    @property
    def architecture(self) -> Optional[Architecture]:
        return self.state.architecture

    def dispatch(self, event: OrchestrationEvent) -> Optional[Architecture]:
        with self._lock:
            self.state, arch = handle_event(self.state, event)
            if arch is not None:
                self.history.append(arch)
            return arch


def architecture_report(arch: Architecture) -> str:
    lines = [f"epoch {arch.epoch}" + (" (stale)" if arch.stale else "")]
    lines.append("path: " + " -> ".join(arch.path.nodes))
    for node_id, cost in zip(arch.services, arch.node_costs):
        lines.append(f"  {node_id:<24} {format_cost(cost)}")
    lines.append(f"total cost: {format_cost(arch.path.total_cost)}")
    lines.append("wiring:")
    lines.extend(f"  {c}" for c in arch.wiring)
    return "\n".join(lines) + "\n"
