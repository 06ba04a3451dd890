"""Graph-based orchestration of service-oriented control architectures."""

from .cost_engine import CostWeights, grouped_attributes, service_cost
from .orchestrator import Architecture, Orchestrator, handle_event, initial_state, orchestrate, wiring_plan
from .service_graph import START, TARGET, ServiceGraph, create_service_graph, export_dot
from .service_model import CostAttributes, Functionality, Kind, Level, ModelComplexity, ServiceDescriptor
from .shortest_path import NoPathError, PathResult, dijkstra

__version__ = "0.1.0"
