"""Closed-form time sequences for the gain weight c(t) and failure probability delta_t."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveParameter, OutOfDomain, UnknownFamily

FAMILIES = ("power", "exp_sqrt", "constant", "table")


@dataclass(frozen=True)
class Schedule:
    """A positive sequence indexed by ``t = 0, 1, 2, ...``.

    Families:
        power     a / (t + 1)**p
        exp_sqrt  b * exp(-sqrt(t))
        constant  value
        table     values[t], finite length
    """

    family: str
    a: float = 1.0
    b: float = 1.0
    p: float = 1.0
    value: float = 1.0
    values: tuple[float, ...] = field(default=(), repr=False)
    description: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UnknownFamily(f"unknown schedule family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "power" and not (self.a > 0 and self.p > 0):
            raise NonPositiveParameter(f"power family needs a > 0 and p > 0, got a={self.a}, p={self.p}")
        if self.family == "exp_sqrt" and not self.b > 0:
            raise NonPositiveParameter(f"exp_sqrt family needs b > 0, got b={self.b}")
        if self.family == "constant" and not self.value > 0:
            raise NonPositiveParameter(f"constant schedule must be positive, got {self.value}")
        if self.family == "table":
            if len(self.values) == 0 or any(not v > 0 for v in self.values):
                raise NonPositiveParameter("table schedule needs a non-empty list of positive values")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.description:
            object.__setattr__(self, "description", self._describe())

    def _describe(self) -> str:
        if self.family == "power":
            return f"{self.a:g}/(t+1)^{self.p:g}"
        if self.family == "exp_sqrt":
            return f"{self.b:g}*exp(-sqrt(t))"
        if self.family == "constant":
            return f"{self.value:g}"
        return f"table[{len(self.values)}]"

    @classmethod
    def power(cls, a: float, p: float) -> "Schedule":
        return cls("power", a=a, p=p)

    @classmethod
    def exp_sqrt(cls, b: float) -> "Schedule":
        return cls("exp_sqrt", b=b)

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls("constant", value=value)

    @classmethod
    def table(cls, values) -> "Schedule":
        return cls("table", values=tuple(values))

    @property
    def length(self) -> float:
        return len(self.values) if self.family == "table" else math.inf

    def __call__(self, t):
        t_arr = np.asarray(t)
        if np.any(t_arr < 0):
            raise OutOfDomain("schedules are defined for t >= 0")
        tf = t_arr.astype(float)
        if self.family == "power":
            out = self.a / (tf + 1.0) ** self.p
        elif self.family == "exp_sqrt":
            out = self.b * np.exp(-np.sqrt(tf))
        elif self.family == "constant":
            out = np.full(tf.shape, self.value)
        else:
            if np.any(t_arr >= len(self.values)):
                raise OutOfDomain(f"table schedule has only {len(self.values)} entries")
            out = np.asarray(self.values)[t_arr.astype(int)]
        return float(out) if out.ndim == 0 else out

    def log(self, t):
        """Natural log of the sequence; finite where the value itself underflows."""
        if self.family == "exp_sqrt":
            tf = np.asarray(t, dtype=float)
            out = math.log(self.b) - np.sqrt(tf)
            return float(out) if out.ndim == 0 else out
        if self.family == "power":
            tf = np.asarray(t, dtype=float)
            out = math.log(self.a) - self.p * np.log1p(tf)
            return float(out) if out.ndim == 0 else out
        return np.log(self(t))

    def to_dict(self) -> dict:
        if self.family == "power":
            return {"family": "power", "a": self.a, "p": self.p}
        if self.family == "exp_sqrt":
            return {"family": "exp_sqrt", "b": self.b}
        if self.family == "constant":
            return {"family": "constant", "value": self.value}
        return {"family": "table", "values": list(self.values)}

    @classmethod
    def from_dict(cls, spec: dict) -> "Schedule":
        spec = dict(spec)
        family = spec.pop("family", None)
        allowed = {"power": {"a", "p"}, "exp_sqrt": {"b"}, "constant": {"value"}, "table": {"values"}}
        if family not in allowed:
            raise UnknownFamily(f"unknown schedule family {family!r}; expected one of {FAMILIES}")
        spec.pop("description", None)
        extra = set(spec) - allowed[family]
        if extra:
            raise UnknownFamily(f"unexpected keys {sorted(extra)} for family {family!r}")
        missing = allowed[family] - set(spec)
        if missing:
            raise UnknownFamily(f"missing keys {sorted(missing)} for family {family!r}")
        if family == "table":
            return cls.table(spec["values"])
        return cls(family, **{k: float(v) for k, v in spec.items()})
