"""Reaction terms, parameters and parameter-space checks for the food chain.

The three species are prey ``u``, specialist middle predator ``v`` and
generalist top predator ``r``::

    u' = a1 u - b1 u^2 - w0 u v / (u + D0)
    v' = -a2 v + w1 u v / (u + D1) - w2 v r / (v + D2)
    r' = c r^2 - w3 r^2 / (v + D3)
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

PARAM_NAMES = ("a1", "b1", "w0", "D0", "a2", "w1", "D1", "w2", "D2", "c", "w3", "D3")


class ParameterError(ValueError):
    """Raised when model parameters violate positivity.

    ``problems`` maps every offending field name to a message so callers can
    report all failures at once.
    """

    def __init__(self, problems: dict[str, str]):
        self.problems = dict(problems)
        detail = "; ".join(f"{k}: {v}" for k, v in self.problems.items())
        super().__init__(f"invalid model parameters ({detail})")


@dataclass(frozen=True)
class ModelParams:
    """The twelve positive rate and saturation constants.

    Validation happens here once so the reaction evaluation in stencil loops
    does no checking.
    """

    a1: float
    b1: float
    w0: float
    D0: float
    a2: float
    w1: float
    D1: float
    w2: float
    D2: float
    c: float
    w3: float
    D3: float

    def __post_init__(self):
        problems = {}
        for f in fields(self):
            value = getattr(self, f.name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                problems[f.name] = f"not a real number ({value!r})"
                continue
            if not math.isfinite(value) or value <= 0.0:
                problems[f.name] = f"must be a finite positive number, got {value!r}"
            else:
                object.__setattr__(self, f.name, value)
        if problems:
            raise ParameterError(problems)

    @classmethod
    def reference(cls) -> "ModelParams":
        """Reference parameter set; it satisfies the boundedness condition."""
        return cls(a1=1.0, b1=0.5, w0=0.55, D0=10.0, a2=1.0, w1=0.1, D1=13.0,
                   w2=0.25, D2=10.0, c=0.055, w3=1.2, D3=20.0)

    def replace(self, **changes) -> "ModelParams":
        values = asdict(self)
        values.update(changes)
        return ModelParams(**values)

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class State:
    """Population densities ``(u, v, r)`` at one instant."""

    u: float
    v: float
    r: float

    def __post_init__(self):
        for name in ("u", "v", "r"):
            value = float(getattr(self, name))
            if not value >= 0.0 or not math.isfinite(value):
                raise ValueError(f"state component {name} must be finite and >= 0, got {value!r}")
            object.__setattr__(self, name, value)

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.r], dtype=float)

    @classmethod
    def from_sequence(cls, values) -> "State":
        u, v, r = values
        return cls(u, v, r)


def reaction(p: ModelParams, u, v, r):
    """Reaction rates ``(f, g, h)``; works elementwise on scalars or arrays."""
    du = p.a1 * u - p.b1 * u * u - p.w0 * u * v / (u + p.D0)
    dv = -p.a2 * v + p.w1 * u * v / (u + p.D1) - p.w2 * v * r / (v + p.D2)
    dr = p.c * r * r - p.w3 * r * r / (v + p.D3)
    return du, dv, dr


def per_capita_rates(p: ModelParams, u, v, r):
    """Reaction rates divided by their own species (every term carries it)."""
    gu = p.a1 - p.b1 * u - p.w0 * v / (u + p.D0)
    gv = -p.a2 + p.w1 * u / (u + p.D1) - p.w2 * r / (v + p.D2)
    gr = (p.c - p.w3 / (v + p.D3)) * r
    return gu, gv, gr


def eval_rhs(p: ModelParams, s: State) -> tuple[float, float, float]:
    return reaction(p, s.u, s.v, s.r)


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of the boundedness-condition check ``c < k * w3 / D3``."""

    k: float
    rhs: float
    c: float
    satisfied: bool

    @property
    def margin(self) -> float:
        return self.rhs - self.c

    def as_dict(self) -> dict:
        d = asdict(self)
        d["margin"] = self.margin
        return d


def condition_factor(p: ModelParams) -> float:
    """k = w0 b1 D3 / (w1 (a1 + a1^2 / (4 a2)) + w0 b1 D3), always in (0, 1)."""
    num = p.w0 * p.b1 * p.D3
    return num / (p.w1 * (p.a1 + p.a1 ** 2 / (4.0 * p.a2)) + num)


def check_condition(p: ModelParams) -> ConditionReport:
    k = condition_factor(p)
    rhs = k * p.w3 / p.D3
    return ConditionReport(k=k, rhs=rhs, c=p.c, satisfied=p.c < rhs)


class Region(enum.Enum):
    BELOW_LOWER = "BelowLower"
    RICH_DYNAMICS = "RichDynamics"
    ABOVE_UPPER = "AboveUpper"


def classify_region(p: ModelParams, v: float) -> Region:
    """Locate ``c`` relative to ``w3/(v+D3) < c < w3/D3``.

    Both inequalities are strict, so ``c`` equal to either bound lies outside
    the rich-dynamics band.
    """
    if v < 0:
        raise ValueError(f"v must be >= 0, got {v!r}")
    upper = p.w3 / p.D3
    lower = p.w3 / (v + p.D3)
    if p.c >= upper:
        return Region.ABOVE_UPPER
    if p.c <= lower:
        return Region.BELOW_LOWER
    return Region.RICH_DYNAMICS
