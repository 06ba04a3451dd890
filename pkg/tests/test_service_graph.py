import graphlib
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svcorch import service_graph
from svcorch.cost_engine import CostWeights, service_cost, grouped_attributes
from svcorch.service_graph import (
    START,
    TARGET,
    GraphConstructionError,
    GraphNode,
    NodeKind,
    create_service_graph,
    export_dot,
    filter_controller_compatible,
)
from svcorch.service_model import ContractError, CostAttributes, Kind, Level, ServiceDescriptor
from svcorch.shortest_path import dijkstra
from svcorch.verify import random_catalog

W = CostWeights(1, 100)


def chain_catalog():
    a = CostAttributes
    return [
        ServiceDescriptor("s", Kind.SENSOR, attrs=a(1, 2)),
        ServiceDescriptor("f", Kind.FILTER, attrs=a(3, 4)),
        ServiceDescriptor("c", Kind.CONTROLLER, attrs=a(5, 6)),
        ServiceDescriptor("act", Kind.ACTUATOR, attrs=a(7, 8)),
    ]


def is_acyclic(g):
    ts = graphlib.TopologicalSorter({n.id: set() for n in g.nodes})
    for e in g.edges:
        ts.add(e.dest, e.source)
    try:
        list(ts.static_order())
    except graphlib.CycleError:
        return False
    return True


def is_layered(g):
    return all(g.node(e.dest).layer == g.node(e.source).layer + 1 for e in g.edges)


def test_scenario2_shape(ref_catalog):
    g = create_service_graph(ref_catalog, W)
    assert len(g.nodes) == 12
    assert len(g.edges) == 20
    per_layer = {}
    for e in g.edges:
        key = (g.node(e.source).kind, g.node(e.dest).kind)
        per_layer[key] = per_layer.get(key, 0) + 1
    assert per_layer == {
        (NodeKind.START, NodeKind.SENSOR): 1,
        (NodeKind.SENSOR, NodeKind.FILTER): 4,
        (NodeKind.FILTER, NodeKind.CONTROLLER): 10,
        (NodeKind.CONTROLLER, NodeKind.ACTUATOR): 4,
        (NodeKind.ACTUATOR, NodeKind.TARGET): 1,
    }
    assert is_acyclic(g) and is_layered(g)


def test_no_edge_from_medium_kalman_to_high_mpc(ref_catalog):
    g = create_service_graph(ref_catalog, W)
    edges = {(e.source, e.dest) for e in g.edges}
    assert ("Kalman+medium", "MPC+high") not in edges
    assert ("Kalman+medium", "MPC+medium") in edges
    assert ("Kalman+high", "MPC+high") in edges
    assert ("Converter", "PID") in edges
    assert not any(s == "Converter" and d.startswith("MPC") for s, d in edges)


def test_node_costs_reference_catalog(ref_catalog):
    g = create_service_graph(ref_catalog, W)
    costs = {n.id: n.node_cost for n in g.nodes}
    assert costs == {
        START: 0, "Sensor": 902, "Kalman+low": 1008, "Kalman+medium": 625, "Kalman+high": 1100,
        "Converter": 1101, "PID": 1101, "MPC+low": 1004, "MPC+medium": 525, "MPC+high": 200,
        "Actuator": 802, TARGET: 0,
    }


def test_single_chain():
    g = create_service_graph(chain_catalog(), W)
    assert [n.id for n in g.nodes] == [START, "s", "f", "c", "act", TARGET]
    assert len(g.edges) == 5
    assert g.out_edges("act")[0].weight == 0


def test_missing_layers_are_construction_errors():
    cat = chain_catalog()
    with pytest.raises(GraphConstructionError, match="sensor"):
        create_service_graph(cat[1:], W)
    with pytest.raises(GraphConstructionError, match="actuator"):
        create_service_graph(cat[:3], W)
    needy = ServiceDescriptor("mpc", Kind.CONTROLLER, requires_model=True)
    with pytest.raises(GraphConstructionError, match="requires a model"):
        create_service_graph(cat + [needy], W)
    with pytest.raises(GraphConstructionError):
        create_service_graph(cat + [ServiceDescriptor("start", Kind.SENSOR, attrs=CostAttributes(1, 1))], W)


def node(kind, level):
    return GraphNode("n", kind, effective_complexity=level)


@pytest.mark.parametrize(
    "f, c, expected",
    [
        (Level.LOW, Level.MEDIUM, False),
        (None, None, True),
        (Level.HIGH, Level.LOW, True),
        (None, Level.LOW, False),
        (Level.LOW, None, True),
    ],
)
def test_filter_controller_compatible(f, c, expected):
    assert filter_controller_compatible(node(NodeKind.FILTER, f), node(NodeKind.CONTROLLER, c)) is expected


def test_filter_controller_compatible_kind_check():
    with pytest.raises(ContractError):
        filter_controller_compatible(node(NodeKind.CONTROLLER, None), node(NodeKind.FILTER, None))


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1))
def test_random_catalog_graph_invariants(seed):
    rng = random.Random(seed)
    cat = random_catalog(rng)
    w = CostWeights(rng.randint(1, 9), rng.randint(1, 9))
    g = create_service_graph(cat, w)
    assert is_acyclic(g) and is_layered(g)
    assert all(e.weight >= 0 for e in g.edges)

    n_models = sum(s.kind is Kind.MODEL for s in cat)
    grouped = lambda k: sum(n_models if s.requires_model else 1 for s in cat if s.kind is k)
    count = lambda k: sum(s.kind is k for s in cat)
    assert len(g.nodes) == 2 + count(Kind.SENSOR) + grouped(Kind.FILTER) + grouped(Kind.CONTROLLER) + count(Kind.ACTUATOR)

    by_id = {s.id: s for s in cat}
    for n in g.nodes:
        incoming = {e.weight for e in g.edges if e.dest == n.id}
        if n.kind is NodeKind.TARGET:
            assert incoming == {0}
        elif n.kind is not NodeKind.START:
            base = by_id[n.base_service]
            attrs = grouped_attributes(base.kind, by_id[n.model_service].attrs) if n.model_service else base.attrs
            assert incoming <= {service_cost(attrs, w)}
            assert len(incoming) <= 1


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_dropping_compatibility_rule_only_adds_edges(seed):
    cat = random_catalog(random.Random(seed))
    with_rule = create_service_graph(cat, W)
    original = service_graph.filter_controller_compatible
    service_graph.filter_controller_compatible = lambda f, c: True
    try:
        without = create_service_graph(cat, W)
    finally:
        service_graph.filter_controller_compatible = original
    assert len(without.nodes) == len(with_rule.nodes)
    assert len(without.edges) >= len(with_rule.edges)
    assert {(e.source, e.dest) for e in with_rule.edges} <= {(e.source, e.dest) for e in without.edges}


def count_statements(dot):
    lines = [ln.strip() for ln in dot.splitlines()]
    edges = [ln for ln in lines if " -> " in ln]
    nodes = [ln for ln in lines if ln.startswith('"') and " -> " not in ln]
    return len(nodes), len(edges)


def test_export_dot_counts(ref_catalog):
    assert count_statements(export_dot(create_service_graph(chain_catalog(), W))) == (6, 5)
    g = create_service_graph(ref_catalog, W)
    dot = export_dot(g)
    assert count_statements(dot) == (12, 20)
    assert dot.endswith("}\n")
    assert '"Kalman+medium" [label="Kalman+medium (625)"]' in dot


def test_export_dot_deterministic_and_highlight(ref_catalog):
    g = create_service_graph(ref_catalog, W)
    path = [START, "Sensor", "Kalman+medium", "MPC+medium", "Actuator", TARGET]
    a, b = export_dot(g, path), export_dot(create_service_graph(ref_catalog, W), path)
    assert a.encode() == b.encode()
    red = [ln for ln in a.splitlines() if "color=red" in ln]
    assert len(red) == 6 + 5
    with pytest.raises(KeyError):
        export_dot(g, [START, "nope"])


def test_scenario_outcomes_do_not_depend_on_converter_rule(ref_catalog, monkeypatch):
    # only the converter clause is our reading; the complexity ordering stays
    strict_rule = service_graph.filter_controller_compatible

    def selections():
        no_mpc = [s for s in ref_catalog if s.id != "MPC"]
        return [dijkstra(create_service_graph(cat, w)).nodes
                for cat, w in ((no_mpc, W), (ref_catalog, W), (ref_catalog, CostWeights(1000, 20)))]

    strict = selections()
    monkeypatch.setattr(service_graph, "filter_controller_compatible",
                        lambda f, c: f.effective_complexity is None or strict_rule(f, c))
    relaxed = create_service_graph(ref_catalog, W)
    assert len(relaxed.edges) == 23  # Converter now feeds all three MPC nodes
    assert selections() == strict
