"""Three-tank plant and the closed-loop scenario runner.

The plant is a nonlinear Torricelli cascade (inflow into tank one, outlet
below tank three) integrated with explicit Euler.  The runner wires the
active architecture's sensor, filter, controller and actuator around it and
feeds timed orchestration events between steps.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .config import KalmanConfig, MpcConfig, PidGains, PlantParams, SensorConfig, with_params
from .control_services import (
    EstimatorState,
    LTIModel,
    PidState,
    build_models,
    converter_step,
    kf_step,
    mpc_step,
    pid_step,
    project_estimate,
)
from .cost_engine import CostWeights
from .orchestrator import (
    Architecture,
    Orchestrator,
    OrchestrationEvent,
    ServiceAdded,
    ServiceRemoved,
    ServiceUpdated,
    WeightsChanged,
)
from .service_graph import format_cost
from .service_model import Kind, ServiceDescriptor

DEFAULT_WEIGHTS = CostWeights(1, 100)
TRACE_HEADER = ("t", "h1", "h2", "h3", "y", "xhat1", "xhat2", "xhat3", "u", "epoch", "step_us")
HISTORY_HEADER = ("t", "epoch", "status", "path", "total_cost")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlantState:
    h1: float = 0.0
    h2: float = 0.0
    h3: float = 0.0

    def levels(self) -> tuple[float, float, float]:
        return (self.h1, self.h2, self.h3)

    def volume(self, params: PlantParams) -> float:
        return sum(a * h for a, h in zip(params.area, self.levels()))


def _flow(c: float, dh: float, g: float) -> float:
    return math.copysign(c * math.sqrt(2 * g * abs(dh)), dh)


def plant_step(s: PlantState, u: float, params: PlantParams, T_s: float) -> PlantState:
    """Explicit Euler step.

    Outflows of a tank are scaled down when they would remove more water than
    it holds, so a long step cannot push a level below zero or create volume.
    """
    h = s.levels()
    A = params.area
    # (source, dest, flow); dest None is the outlet below tank three
    flows = []
    for i, c in ((0, params.c12), (1, params.c23)):
        q = _flow(c, h[i] - h[i + 1], params.g)
        flows.append((i, i + 1, q) if q >= 0 else (i + 1, i, -q))
    flows.append((2, None, params.c3 * math.sqrt(2 * params.g * h[2])))
    out = [0.0, 0.0, 0.0]
    for src, _, q in flows:
        out[src] += q * T_s
    scale = [min(1.0, A[i] * h[i] / out[i]) if out[i] > 0 else 1.0 for i in range(3)]
    vol = [A[i] * h[i] for i in range(3)]
    vol[0] += u * T_s
    for src, dst, q in flows:
        moved = q * T_s * scale[src]
        vol[src] -= moved
        if dst is not None:
            vol[dst] += moved
    top = params.tank_height
    return PlantState(*(min(max(v / a, 0.0), top) for v, a in zip(vol, A)))


# -- scenarios -------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioEvent:
    time: float
    kind: str  # service_added | service_removed | service_updated | weights_changed
    service_id: Optional[str] = None
    service: Optional[ServiceDescriptor] = None
    weights: Optional[CostWeights] = None

    def resolve(self, catalog: Sequence[ServiceDescriptor]) -> OrchestrationEvent:
        if self.kind == "weights_changed":
            return WeightsChanged(self.weights)
        if self.kind == "service_removed":
            return ServiceRemoved(self.service_id)
        service = self.service
        if service is None:
            matches = [s for s in catalog if s.id == self.service_id]
            if not matches:
                raise SimulationError(f"event at t={self.time}: unknown service {self.service_id!r}")
            service = matches[0]
        return ServiceAdded(service) if self.kind == "service_added" else ServiceUpdated(service)


@dataclass(frozen=True)
class SimScenario:
    duration: float
    sample_time: float = 0.1
    reference: tuple[tuple[float, float], ...] = ((0.0, 0.2),)
    events: tuple[ScenarioEvent, ...] = ()
    seed: int = 0
    weights: Optional[CostWeights] = None
    withheld: tuple[str, ...] = ()
    initial_levels: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.duration < 0 or self.sample_time <= 0:
            raise ValueError("duration must be >= 0 and sample_time > 0")
        times = [e.time for e in self.events]
        if any(t < 0 or t > self.duration for t in times):
            raise ValueError("event times must lie within [0, duration]")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("event times must be strictly increasing")
        ref_times = [t for t, _ in self.reference]
        if not ref_times or ref_times[0] != 0 or any(b <= a for a, b in zip(ref_times, ref_times[1:])):
            raise ValueError("reference must start at t=0 with strictly increasing breakpoints")

    def reference_at(self, t: float) -> float:
        i = bisect.bisect_right([rt for rt, _ in self.reference], t + 1e-9) - 1
        return self.reference[i][1]

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.sample_time))


# -- runtime behaviors ----------------------------------------------------------


class KalmanRuntime:
    def __init__(self, model: LTIModel, cfg: KalmanConfig, x0):
        self.model, self.cfg = model, cfg
        self.labels = model.state_labels
        self.est = EstimatorState.prior(model, x0, cfg.p0)

    def step(self, u_prev: float, y: float) -> np.ndarray:
        self.est = kf_step(self.est, self.model, u_prev, y, self.cfg)
        return self.est.x_hat


class ConverterRuntime:
    labels = ("h3",)

    def step(self, u_prev: float, y: float) -> np.ndarray:
        return converter_step(y)


class PidRuntime:
    def __init__(self, gains: PidGains, T_s: float, u_max: float):
        self.gains, self.T_s, self.u_max = gains, T_s, u_max
        self.state = PidState()

    def step(self, k: int, ref: float, x_hat: np.ndarray, labels) -> float:
        self.state, u = pid_step(self.state, ref, float(x_hat[-1]), self.gains, self.T_s, self.u_max)
        return u


class MpcRuntime:
    """Re-solves every `period` seconds and holds the first move in between."""

    def __init__(self, model: LTIModel, cfg: MpcConfig, T_s: float, params: PlantParams):
        self.model = model.resample(cfg.period)
        self.cfg, self.params = cfg, params
        self.every = max(1, int(round(cfg.period / T_s)))
        self.u = None
        self.soft_steps = 0

    def step(self, k: int, ref: float, x_hat: np.ndarray, labels) -> float:
        if self.u is None or k % self.every == 0:
            x = project_estimate(x_hat, labels, self.model)
            res = mpc_step(self.model, x, ref, self.cfg, self.params.u_max, self.params.h_max)
            self.soft_steps += res.soft_constrained
            self.u = res.u
        return self.u


@dataclass
class TraceRecord:
    t: float
    levels: tuple[float, float, float]
    y: float
    x_hat: dict
    u: float
    epoch: int
    step_us: Optional[float] = None

    def row(self) -> list[str]:
        fmt = lambda v: format(v, ".10g")
        xs = [fmt(self.x_hat[lbl]) if lbl in self.x_hat else "" for lbl in ("h1", "h2", "h3")]
        return [fmt(self.t), *map(fmt, self.levels), fmt(self.y), *xs, fmt(self.u), str(self.epoch),
                "" if self.step_us is None else f"{self.step_us:.1f}"]


@dataclass
class HistoryEntry:
    t: float
    epoch: int
    status: str  # active | stale
    path: tuple[str, ...]
    total_cost: float
    detail: str = ""

    def row(self) -> list[str]:
        return [format(self.t, ".10g"), str(self.epoch), self.status, " ".join(self.path),
                format_cost(self.total_cost)]


@dataclass
class SimResult:
    trace: list[TraceRecord] = field(default_factory=list)
    history: list[HistoryEntry] = field(default_factory=list)

    @property
    def epochs(self) -> list[int]:
        return sorted({h.epoch for h in self.history})

    def trace_csv(self) -> str:
        return _csv(TRACE_HEADER, [r.row() for r in self.trace])

    def history_csv(self) -> str:
        return _csv(HISTORY_HEADER, [h.row() for h in self.history])


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


class _Loop:
    """Instantiates behaviors for whatever architecture is active."""

    def __init__(self, catalog, params: PlantParams, T_s: float, x0):
        self.params, self.T_s = params, T_s
        self.by_id = {s.id: s for s in catalog}
        self.models = {m.n: m for m in build_models(params, T_s)}
        self.filter_node = self.controller_node = None
        self.filter = self.controller = None
        self.sensor_cfg = SensorConfig()
        self.x_hat, self.labels = np.asarray(x0, float), ("h1", "h2", "h3")

    def _model(self, model_id: str) -> LTIModel:
        dim = self.by_id[model_id].complexity.state_dimension
        if dim not in self.models:
            raise SimulationError(f"no plant model with state dimension {dim}")
        return self.models[dim]

    def apply(self, arch: Architecture):
        for node in arch.selected:
            node_id, model, kind = node.id, node.model_service, Kind(node.kind.value)
            svc = self.by_id[node.base_service]
            if kind is Kind.SENSOR:
                self.sensor_cfg = with_params(SensorConfig(), svc.params)
            elif kind is Kind.FILTER and node_id != self.filter_node:
                self.filter_node = node_id
                if model is None:
                    self.filter = ConverterRuntime()
                else:
                    m = self._model(model)
                    x0 = project_estimate(self.x_hat, self.labels, m)
                    self.filter = KalmanRuntime(m, with_params(KalmanConfig(), svc.params), x0)
            elif kind is Kind.CONTROLLER and node_id != self.controller_node:
                self.controller_node = node_id
                if model is None:
                    self.controller = PidRuntime(with_params(PidGains(), svc.params), self.T_s, self.params.u_max)
                else:
                    cfg = with_params(MpcConfig(), svc.params)
                    self.controller = MpcRuntime(self._model(model), cfg, self.T_s, self.params)


def run_scenario(
    scn: SimScenario,
    catalog: Sequence[ServiceDescriptor],
    weights: Optional[CostWeights] = None,
    params: PlantParams = PlantParams(),
    timing: bool = False,
) -> SimResult:
    """Closed-loop run; events are dispatched between steps in time order.

    Wall-clock step timing is only recorded with `timing=True`, so default
    traces are reproducible byte for byte.
    """
    weights = weights or scn.weights or DEFAULT_WEIGHTS
    catalog = list(catalog)
    initial = [s for s in catalog if s.id not in scn.withheld]
    orch = Orchestrator.start(initial, weights)
    result = SimResult()
    if orch.architecture is None:
        raise SimulationError(f"no initial architecture: {orch.state.last_error}")

    loop = _Loop(catalog, params, scn.sample_time, scn.initial_levels)
    arch = orch.architecture
    loop.apply(arch)
    result.history.append(HistoryEntry(0.0, arch.epoch, "active", arch.path.nodes, arch.path.total_cost))

    rng = np.random.default_rng(scn.seed)
    plant = PlantState(*scn.initial_levels)
    pending = list(scn.events)
    u_prev = 0.0
    T_s = scn.sample_time
    for k in range(scn.steps):
        t = k * T_s
        while pending and pending[0].time <= t + 1e-9:
            ev = pending.pop(0)
            oe = ev.resolve(catalog)
            if isinstance(oe, (ServiceAdded, ServiceUpdated)):
                loop.by_id[oe.service.id] = oe.service
            new = orch.dispatch(oe)
            cur = orch.architecture
            if new is not None:
                loop.apply(new)
                result.history.append(HistoryEntry(t, new.epoch, "active", new.path.nodes, new.path.total_cost))
            elif cur is not None and cur.stale:
                result.history.append(HistoryEntry(t, cur.epoch, "stale", cur.path.nodes, cur.path.total_cost,
                                                   orch.state.last_error or ""))
        epoch = orch.architecture.epoch
        started = time.perf_counter() if timing else 0.0
        ref = scn.reference_at(t)
        y = plant.h3 + loop.sensor_cfg.noise_std * rng.standard_normal()
        x_hat = loop.filter.step(u_prev, y)
        loop.x_hat, loop.labels = x_hat, loop.filter.labels
        u = loop.controller.step(k, ref, x_hat, loop.filter.labels)
        u = min(max(u, 0.0), params.u_max)  # actuator saturation
        elapsed = (time.perf_counter() - started) * 1e6 if timing else None
        result.trace.append(
            TraceRecord(t, plant.levels(), y, dict(zip(loop.filter.labels, map(float, x_hat))), u, epoch, elapsed)
        )
        plant = plant_step(plant, u, params, T_s)
        u_prev = u
    return result
