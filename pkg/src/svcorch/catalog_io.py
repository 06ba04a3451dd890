"""Text formats for service catalogs and simulation scenarios.

Both are INI-like: ``[header tokens]`` opens a section, ``key = value`` lines
fill it, ``#`` starts a comment.  See docs/formats.md for the grammar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .cost_engine import CostWeights
from .plant_sim import ScenarioEvent, SimScenario
from .service_graph import format_cost
from .service_model import (
    DEFAULT_STATE_DIMENSION,
    ContractError,
    CostAttributes,
    Direction,
    Functionality,
    Kind,
    Level,
    ModelComplexity,
    Port,
    ServiceDescriptor,
    default_ports,
)


class ParseError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.field = field


@dataclass
class Section:
    header: list[str]
    line: int
    entries: dict[str, tuple[str, int]] = field(default_factory=dict)

    def get(self, key: str, required: bool = False) -> Optional[str]:
        if key in self.entries:
            return self.entries[key][0]
        if required:
            raise ParseError(f"[{' '.join(self.header)}] is missing required field {key!r}", self.line, key)
        return None

    def line_of(self, key: str) -> int:
        return self.entries[key][1] if key in self.entries else self.line


def read_sections(text: str) -> list[Section]:
    sections: list[Section] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ParseError(f"malformed section header {raw.strip()!r}", lineno)
            sections.append(Section(line[1:-1].split(), lineno))
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if not sections:
            raise ParseError(f"{key!r} appears outside any section", lineno, key)
        sec = sections[-1]
        if key in sec.entries:
            raise ParseError(f"duplicate field {key!r}", lineno, key)
        sec.entries[key] = (value, lineno)
    return sections


def _number(sec: Section, key: str, required: bool = True, positive: bool = False) -> Optional[float]:
    text = sec.get(key, required)
    if text is None:
        return None
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{key} must be a number, got {text!r}", sec.line_of(key), key) from None
    if not math.isfinite(value):
        raise ParseError(f"{key} must be finite", sec.line_of(key), key)
    if positive and value <= 0:
        raise ParseError(f"{key} must be > 0, got {text}", sec.line_of(key), key)
    return value


def _bool(sec: Section, key: str) -> bool:
    text = sec.get(key)
    if text is None:
        return False
    if text.lower() in ("true", "yes", "1"):
        return True
    if text.lower() in ("false", "no", "0"):
        return False
    raise ParseError(f"{key} must be true or false, got {text!r}", sec.line_of(key), key)


def _ports(sec: Section, key: str, direction: Direction) -> Optional[list[Port]]:
    text = sec.get(key)
    if text is None:
        return None
    ports = []
    for tag in filter(None, (t.strip() for t in text.split(","))):
        try:
            ports.append(Port(direction, Functionality(tag)))
        except ValueError:
            raise ParseError(f"unknown functionality type {tag!r}", sec.line_of(key), key) from None
    return ports


SERVICE_KEYS = ("kind", "requires_model", "x_comp", "y_inacc", "complexity", "state_dimension",
                "requires", "guarantees")


def service_from_section(sec: Section, service_id: str) -> ServiceDescriptor:
    kind_text = sec.get("kind", required=True)
    try:
        kind = Kind(kind_text)
    except ValueError:
        raise ParseError(f"unknown kind {kind_text!r}", sec.line_of("kind"), "kind") from None
    requires_model = _bool(sec, "requires_model")
    x = _number(sec, "x_comp", required=not requires_model, positive=True)
    y = _number(sec, "y_inacc", required=not requires_model, positive=True)
    if (x is None) != (y is None):
        missing = "x_comp" if x is None else "y_inacc"
        raise ParseError(f"missing required field {missing!r}", sec.line, missing)
    complexity = None
    if kind is Kind.MODEL:
        level_text = sec.get("complexity", required=True)
        try:
            level = Level.parse(level_text)
        except ValueError as exc:
            raise ParseError(str(exc), sec.line_of("complexity"), "complexity") from None
        dim = _number(sec, "state_dimension", required=False, positive=True)
        if dim is not None and not dim.is_integer():
            raise ParseError("state_dimension must be an integer", sec.line_of("state_dimension"))
        complexity = ModelComplexity(level, int(dim) if dim else DEFAULT_STATE_DIMENSION[level])
    elif "complexity" in sec.entries:
        raise ParseError("only model services take a complexity", sec.line_of("complexity"), "complexity")
    reqs = _ports(sec, "requires", Direction.REQUIREMENT)
    guars = _ports(sec, "guarantees", Direction.GUARANTEE)
    if reqs is None and guars is None:
        ports = ()
    else:
        defaults = default_ports(kind, requires_model)
        if reqs is None:
            reqs = [p for p in defaults if p.direction is Direction.REQUIREMENT]
        if guars is None:
            guars = [p for p in defaults if p.direction is Direction.GUARANTEE]
        ports = tuple(reqs) + tuple(guars)
    params = {k: v for k, (v, _) in sec.entries.items() if k not in SERVICE_KEYS}
    try:
        return ServiceDescriptor(
            service_id, kind, requires_model, ports,
            CostAttributes(x, y) if x is not None else None, complexity, params,
        )
    except ContractError as exc:
        raise ParseError(str(exc), sec.line) from None


def parse_catalog(text: str) -> list[ServiceDescriptor]:
    services: list[ServiceDescriptor] = []
    seen: dict[str, int] = {}
    for sec in read_sections(text):
        if len(sec.header) != 2 or sec.header[0] != "service":
            raise ParseError(f"expected [service <id>], got [{' '.join(sec.header)}]", sec.line)
        sid = sec.header[1]
        if sid in seen:
            raise ParseError(f"duplicate service id {sid!r} (first defined on line {seen[sid]})", sec.line, "id")
        seen[sid] = sec.line
        services.append(service_from_section(sec, sid))
    return services


def _fmt(value: float) -> str:
    return format_cost(value)


def service_lines(s: ServiceDescriptor) -> list[str]:
    lines = [f"kind = {s.kind.value}"]
    if s.requires_model:
        lines.append("requires_model = true")
    if s.attrs is not None:
        lines += [f"x_comp = {_fmt(s.attrs.x_comp)}", f"y_inacc = {_fmt(s.attrs.y_inacc)}"]
    if s.complexity is not None:
        lines.append(f"complexity = {s.complexity.level.label}")
        if s.complexity.state_dimension != DEFAULT_STATE_DIMENSION[s.complexity.level]:
            lines.append(f"state_dimension = {s.complexity.state_dimension}")
    if s.ports != default_ports(s.kind, s.requires_model):
        lines.append("requires = " + ", ".join(p.functionality.value for p in s.requirements))
        lines.append("guarantees = " + ", ".join(p.functionality.value for p in s.guarantees))
    lines += [f"{k} = {v}" for k, v in sorted(s.params.items())]
    return lines


def serialize_catalog(services: Iterable[ServiceDescriptor]) -> str:
    blocks = ["\n".join([f"[service {s.id}]", *service_lines(s)]) for s in services]
    return "\n\n".join(blocks) + ("\n" if blocks else "")


# -- scenarios ---------------------------------------------------------------------

EVENT_KINDS = ("service_added", "service_removed", "service_updated", "weights_changed")


def _pairs(sec: Section, key: str) -> tuple[tuple[float, float], ...]:
    text = sec.get(key)
    out = []
    for item in filter(None, (p.strip() for p in text.split(","))):
        t, sep, v = item.partition(":")
        try:
            out.append((float(t), float(v)))
        except ValueError:
            raise ParseError(f"{key} expects 'time:value' pairs, got {item!r}", sec.line_of(key), key) from None
        if not sep:
            raise ParseError(f"{key} expects 'time:value' pairs, got {item!r}", sec.line_of(key), key)
    return tuple(out)


def _weights(sec: Section, required: bool) -> Optional[CostWeights]:
    a = _number(sec, "alpha", required=required, positive=True)
    b = _number(sec, "beta", required=required or a is not None, positive=True)
    return CostWeights(a, b) if a is not None else None


def parse_scenario(text: str) -> SimScenario:
    sections = read_sections(text)
    if not sections or sections[0].header != ["scenario"]:
        raise ParseError("a scenario file must start with a [scenario] section", sections[0].line if sections else None)
    head = sections[0]
    duration = _number(head, "duration")
    if duration < 0:
        raise ParseError("duration must be >= 0", head.line_of("duration"), "duration")
    kwargs = dict(duration=duration)
    if "sample_time" in head.entries:
        kwargs["sample_time"] = _number(head, "sample_time", positive=True)
    if "seed" in head.entries:
        seed = _number(head, "seed")
        if not seed.is_integer() or seed < 0:
            raise ParseError("seed must be a non-negative integer", head.line_of("seed"), "seed")
        kwargs["seed"] = int(seed)
    if "reference" in head.entries:
        kwargs["reference"] = _pairs(head, "reference")
    if "withheld" in head.entries:
        kwargs["withheld"] = tuple(filter(None, (s.strip() for s in head.get("withheld").split(","))))
    if "initial_levels" in head.entries:
        try:
            levels = tuple(float(v) for v in head.get("initial_levels").split(","))
        except ValueError:
            levels = ()
        if len(levels) != 3 or min(levels) < 0:
            raise ParseError("initial_levels expects three non-negative numbers",
                             head.line_of("initial_levels"), "initial_levels")
        kwargs["initial_levels"] = levels
    kwargs["weights"] = _weights(head, required=False)
    unknown = set(head.entries) - {"duration", "sample_time", "seed", "reference", "withheld",
                                   "initial_levels", "alpha", "beta"}
    if unknown:
        key = sorted(unknown)[0]
        raise ParseError(f"unknown scenario field {key!r}", head.line_of(key), key)

    events = []
    last_time = None
    for sec in sections[1:]:
        h = sec.header
        if h[0] != "event" or len(h) < 3:
            raise ParseError(f"expected [event <time> <kind> ...], got [{' '.join(h)}]", sec.line)
        try:
            t = float(h[1])
        except ValueError:
            raise ParseError(f"event time must be a number, got {h[1]!r}", sec.line) from None
        kind = h[2]
        if kind not in EVENT_KINDS:
            raise ParseError(f"unknown event kind {kind!r}", sec.line)
        if t < 0 or t > duration:
            raise ParseError(f"event time {h[1]} outside [0, {_fmt(duration)}]", sec.line)
        if last_time is not None and t <= last_time:
            raise ParseError("event times must be strictly increasing", sec.line)
        last_time = t
        if kind == "weights_changed":
            if len(h) != 3:
                raise ParseError("weights_changed takes no service id", sec.line)
            events.append(ScenarioEvent(t, kind, weights=_weights(sec, required=True)))
            continue
        if len(h) != 4:
            raise ParseError(f"{kind} needs exactly one service id", sec.line)
        service = service_from_section(sec, h[3]) if sec.entries else None
        if kind == "service_removed" and service is not None:
            raise ParseError("service_removed takes no fields", sec.line)
        if kind == "service_updated" and service is None:
            raise ParseError("service_updated needs the full new service definition", sec.line)
        events.append(ScenarioEvent(t, kind, service_id=h[3], service=service))
    try:
        return SimScenario(events=tuple(events), **kwargs)
    except ValueError as exc:
        raise ParseError(str(exc), head.line) from None


def serialize_scenario(scn: SimScenario) -> str:
    head = [
        "[scenario]",
        f"duration = {_fmt(scn.duration)}",
        f"sample_time = {_fmt(scn.sample_time)}",
        f"seed = {scn.seed}",
        "reference = " + ", ".join(f"{_fmt(t)}:{_fmt(v)}" for t, v in scn.reference),
    ]
    if scn.weights is not None:
        head += [f"alpha = {_fmt(scn.weights.alpha_comp)}", f"beta = {_fmt(scn.weights.beta_inacc)}"]
    if scn.withheld:
        head.append("withheld = " + ", ".join(scn.withheld))
    if scn.initial_levels != (0.0, 0.0, 0.0):
        head.append("initial_levels = " + ", ".join(_fmt(v) for v in scn.initial_levels))
    blocks = ["\n".join(head)]
    for e in scn.events:
        if e.kind == "weights_changed":
            blocks.append(f"[event {_fmt(e.time)} weights_changed]\nalpha = {_fmt(e.weights.alpha_comp)}\n"
                          f"beta = {_fmt(e.weights.beta_inacc)}")
        else:
            lines = [f"[event {_fmt(e.time)} {e.kind} {e.service_id}]"]
            if e.service is not None:
                lines += service_lines(e.service)
            blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def load_catalog(path) -> list[ServiceDescriptor]:
    with open(path, encoding="utf-8") as fh:
        return parse_catalog(fh.read())


def load_scenario(path) -> SimScenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())
