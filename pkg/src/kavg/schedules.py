"""Stepsize and batch-size schedules indexed by global round ``j = 1, 2, ...``.

The same spec object can drive either role.  As a stepsize a power law is
``c * j**(-p)``; as a batch size it is ``ceil(c * j**p)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Union

from .errors import ConfigError


def _ceil(x: float) -> int:
    # j**p lands a hair above an integer (8**(1/3) == 2.0000000000000004)
    return math.ceil(round(x, 9))


@dataclass(frozen=True)
class Constant:
    value: float

    def gamma(self, j: int) -> float:
        return float(self.value)

    def batch(self, j: int) -> int:
        return _ceil(self.value)

    def label(self) -> str:
        return f"const({self.value:g})"


@dataclass(frozen=True)
class PowerLaw:
    coefficient: float
    exponent: float

    def gamma(self, j: int) -> float:
        return self.coefficient * j ** (-self.exponent)

    def batch(self, j: int) -> int:
        return _ceil(self.coefficient * j**self.exponent)

    def label(self) -> str:
        return f"power({self.coefficient:g},{self.exponent:g})"


@dataclass(frozen=True)
class Table:
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if not self.values:
            raise ConfigError("table schedule needs at least one value")

    def _at(self, j: int) -> float:
        if not 1 <= j <= len(self.values):
            raise IndexError(f"table schedule has {len(self.values)} entries, round {j} requested")
        return self.values[j - 1]

    def gamma(self, j: int) -> float:
        return float(self._at(j))

    def batch(self, j: int) -> int:
        return _ceil(self._at(j))

    def label(self) -> str:
        return "table(" + ";".join(f"{v:g}" for v in self.values) + ")"


@dataclass(frozen=True)
class StepDecay:
    """``initial * factor**((j - 1) // period)``: multiply by ``factor`` every ``period`` rounds."""

    initial: float
    factor: float
    period: int

    def gamma(self, j: int) -> float:
        return self.initial * self.factor ** ((j - 1) // self.period)

    def batch(self, j: int) -> int:
        return _ceil(self.gamma(j))

    def label(self) -> str:
        return f"step({self.initial:g},{self.factor:g},{self.period})"


ScheduleSpec = Union[Constant, PowerLaw, Table, StepDecay]


def as_schedule(x: Any) -> ScheduleSpec:
    """Coerce a number, a schedule object, a dict or a compact string into a schedule.

    Strings: ``const:0.1``, ``power:1,0.5``, ``table:1,0.5,0.25``, ``step:1,0.5,50``.
    """
    if isinstance(x, (Constant, PowerLaw, Table, StepDecay)):
        return x
    if isinstance(x, bool):
        raise ConfigError(f"not a schedule: {x!r}")
    if isinstance(x, (int, float)):
        return Constant(x)
    try:
        if isinstance(x, str):
            name, _, args = x.partition(":")
            vals = [float(v) for v in args.split(",")] if args else []
            name = name.strip().lower()
            if name in ("const", "constant"):
                return Constant(*vals)
            if name in ("power", "power_law"):
                return PowerLaw(*vals)
            if name == "table":
                return Table(tuple(vals))
            if name in ("step", "step_decay"):
                return StepDecay(vals[0], vals[1], int(vals[2]))
        elif isinstance(x, dict):
            kind = x.get("kind")
            if kind == "constant":
                return Constant(x["value"])
            if kind == "power_law":
                return PowerLaw(x["coefficient"], x["exponent"])
            if kind == "table":
                return Table(tuple(x["values"]))
            if kind == "step_decay":
                return StepDecay(x["initial"], x["factor"], int(x["period"]))
    except (TypeError, KeyError, IndexError, ValueError) as exc:
        raise ConfigError(f"malformed schedule {x!r}: {exc}") from None
    raise ConfigError(f"unknown schedule {x!r}")


def schedule_to_dict(spec: ScheduleSpec) -> dict:
    if isinstance(spec, Constant):
        return {"kind": "constant", "value": spec.value}
    if isinstance(spec, PowerLaw):
        return {"kind": "power_law", "coefficient": spec.coefficient, "exponent": spec.exponent}
    if isinstance(spec, Table):
        return {"kind": "table", "values": list(spec.values)}
    return {"kind": "step_decay", "initial": spec.initial, "factor": spec.factor,
            "period": spec.period}


def validate(spec: ScheduleSpec, rounds: int, role: str, allow_zero: bool = False) -> None:
    """Check the first ``rounds`` values for ``role`` in {'gamma', 'batch'} are positive."""
    for j in range(1, rounds + 1):
        v = spec.gamma(j) if role == "gamma" else spec.batch(j)
        if not (v > 0 or (allow_zero and v == 0)):
            raise ConfigError(f"{role} schedule {spec.label()} is not positive at round {j}")
