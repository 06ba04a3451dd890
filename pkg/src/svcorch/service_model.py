"""Service vocabulary: kinds, ports, functionality types and model complexity."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional


class ContractError(ValueError):
    """An operation was called with arguments violating its precondition."""


class Functionality(str, enum.Enum):
    """Data-kind tag carried by a port."""

    MEASUREMENT = "y"
    CONTROL_INPUT = "u"
    STATE_ESTIMATE = "x"
    MODEL = "model"
    REFERENCE = "ref"


class Direction(str, enum.Enum):
    REQUIREMENT = "requirement"
    GUARANTEE = "guarantee"


class Kind(str, enum.Enum):
    SENSOR = "sensor"
    FILTER = "filter"
    CONTROLLER = "controller"
    ACTUATOR = "actuator"
    MODEL = "model"


class Level(enum.IntEnum):
    """Ordinal model complexity; integer order is the compatibility order."""

    LOW = 1
    MEDIUM = 2
    HIGH = 3

    @classmethod
    def parse(cls, text: str) -> "Level":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown complexity level {text!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


DEFAULT_STATE_DIMENSION = {Level.LOW: 1, Level.MEDIUM: 2, Level.HIGH: 3}


@dataclass(frozen=True)
class Port:
    direction: Direction
    functionality: Functionality


@dataclass(frozen=True)
class ModelComplexity:
    level: Level
    state_dimension: int

    def __post_init__(self):
        if self.state_dimension < 1:
            raise ContractError("state_dimension must be a positive integer")

    @classmethod
    def of(cls, level: Level) -> "ModelComplexity":
        return cls(level, DEFAULT_STATE_DIMENSION[level])


@dataclass(frozen=True)
class CostAttributes:
    x_comp: float
    y_inacc: float

    def __post_init__(self):
        if not (self.x_comp > 0 and self.y_inacc > 0):
            raise ContractError(
                f"cost attributes must be > 0, got x_comp={self.x_comp}, y_inacc={self.y_inacc}"
            )


def default_ports(kind: Kind, requires_model: bool = False) -> tuple[Port, ...]:
    """Ports a service of `kind` carries when the catalog does not list them.

    Model-based filters consume the applied input as well as the measurement;
    the converter filter and PID do not.
    """
    req, guar = Direction.REQUIREMENT, Direction.GUARANTEE
    F = Functionality
    if kind is Kind.SENSOR:
        return (Port(guar, F.MEASUREMENT),)
    if kind is Kind.FILTER:
        reqs = [F.MEASUREMENT] + ([F.CONTROL_INPUT, F.MODEL] if requires_model else [])
        return tuple(Port(req, f) for f in reqs) + (Port(guar, F.STATE_ESTIMATE),)
    if kind is Kind.CONTROLLER:
        reqs = [F.STATE_ESTIMATE] + ([F.MODEL] if requires_model else []) + [F.REFERENCE]
        return tuple(Port(req, f) for f in reqs) + (Port(guar, F.CONTROL_INPUT),)
    if kind is Kind.ACTUATOR:
        return (Port(req, F.CONTROL_INPUT),)
    return (Port(guar, F.MODEL),)


@dataclass(frozen=True)
class ServiceDescriptor:
    """A catalog entry.

    `attrs` may be omitted only for services that require a model: their
    graph cost comes from the grouped model attributes instead.  `params`
    holds behavior settings (gains, noise levels, horizons) as raw text.
    """

    id: str
    kind: Kind
    requires_model: bool = False
    ports: tuple[Port, ...] = ()
    attrs: Optional[CostAttributes] = None
    complexity: Optional[ModelComplexity] = None
    params: Mapping[str, str] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if not self.id or any(c.isspace() for c in self.id) or "]" in self.id:
            raise ContractError(f"invalid service id {self.id!r}")
        if (self.kind is Kind.MODEL) != (self.complexity is not None):
            raise ContractError(f"{self.id}: complexity must be given iff kind is model")
        if self.requires_model and self.kind not in (Kind.FILTER, Kind.CONTROLLER):
            raise ContractError(f"{self.id}: only filters and controllers can require a model")
        if self.attrs is None and not self.requires_model:
            raise ContractError(f"{self.id}: cost attributes are required")
        if not self.ports:
            object.__setattr__(self, "ports", default_ports(self.kind, self.requires_model))
        reqs = {p.functionality for p in self.requirements}
        guars = {p.functionality for p in self.guarantees}
        if len(reqs) != len(self.requirements) or len(guars) != len(self.guarantees):
            raise ContractError(f"{self.id}: duplicate port")

    @property
    def requirements(self) -> tuple[Port, ...]:
        return tuple(p for p in self.ports if p.direction is Direction.REQUIREMENT)

    @property
    def guarantees(self) -> tuple[Port, ...]:
        return tuple(p for p in self.ports if p.direction is Direction.GUARANTEE)

    def guarantees_functionality(self, f: Functionality) -> bool:
        return any(p.functionality is f for p in self.guarantees)


def ports_compatible(req: Port, guar: Port) -> bool:
    if req.direction is not Direction.REQUIREMENT or guar.direction is not Direction.GUARANTEE:
        raise ContractError("ports_compatible expects (requirement, guarantee)")
    return req.functionality is guar.functionality


def complexity_geq(a: ModelComplexity, b: ModelComplexity) -> bool:
    return a.level >= b.level


def validate_catalog(services: Iterable[ServiceDescriptor]) -> None:
    """Check catalog-wide invariants: unique ids, level/dimension consistency."""
    seen: set[str] = set()
    models = []
    for s in services:
        if s.id in seen:
            raise ContractError(f"duplicate service id {s.id!r}")
        seen.add(s.id)
        if s.kind is Kind.MODEL:
            models.append(s)
    for a in models:
        for b in models:
            if a.complexity.level < b.complexity.level and (
                a.complexity.state_dimension > b.complexity.state_dimension
            ):
                raise ContractError(
                    f"models {a.id!r} and {b.id!r}: complexity level order disagrees "
                    "with state dimension order"
                )
