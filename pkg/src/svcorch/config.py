"""Default parameters for the three-tank demonstration.

Units: levels in m, areas in m^2, flows in m^3/s, time in s.  The outlet
coefficients are effective orifice areas (discharge coefficient folded in).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Mapping


@dataclass(frozen=True)
class PlantParams:
    area: tuple[float, float, float] = (0.0154, 0.0154, 0.0154)
    c12: float = 2.0e-4
    c23: float = 2.0e-4
    c3: float = 1.5e-4
    g: float = 9.81
    tank_height: float = 0.62
    h_max: float = 0.30  # operating limit on tank three
    u_max: float = 6.0e-4
    h3_operating: float = 0.20

    def __post_init__(self):
        if min(self.area) <= 0 or min(self.c12, self.c23, self.c3) < 0 or self.g <= 0:
            raise ValueError("tank areas and gravity must be > 0, valve coefficients >= 0")
        if self.c12 == 0 or self.c23 == 0:
            raise ValueError("inter-tank valves must be open (c12, c23 > 0)")

    def operating_point(self) -> tuple[tuple[float, float, float], float]:
        """Equilibrium levels and inflow that hold h3 at `h3_operating`."""
        if self.c3 <= 0 or self.h3_operating <= 0:
            raise ValueError("operating point needs an open outlet and positive h3")
        q = self.c3 * math.sqrt(2 * self.g * self.h3_operating)
        h3 = self.h3_operating
        h2 = h3 + (q / self.c23) ** 2 / (2 * self.g)
        h1 = h2 + (q / self.c12) ** 2 / (2 * self.g)
        return (h1, h2, h3), q


@dataclass(frozen=True)
class SensorConfig:
    noise_std: float = math.sqrt(1e-3)


@dataclass(frozen=True)
class KalmanConfig:
    q: float = 1e-4
    r: float = 1e-3
    p0: float = 1e-2


@dataclass(frozen=True)
class PidGains:
    kp: float = 2.0e-3
    ki: float = 5.0e-5
    kd: float = 0.0


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 10
    q: float = 100.0
    r_u: float = 1.0e5
    period: float = 3.0  # controller sample time; input held between solves
    tol: float = 1e-7
    max_iter: int = 20000


def with_params(cfg, params: Mapping[str, str]):
    """Override dataclass fields from text parameters; unknown keys are ignored."""
    updates = {}
    for f in fields(cfg):
        if f.name in params:
            current = getattr(cfg, f.name)
            updates[f.name] = type(current)(float(params[f.name])) if not isinstance(current, tuple) else current
    return replace(cfg, **updates)
