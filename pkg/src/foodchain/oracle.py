"""Closed-form comparison system, blow-up data selection and the psi certificate.

The comparison system replaces the middle and top predator equations by

    v1' = -a2 v1 - w2 v1 r1,      r1' = delta r1^2,

whose solutions are known in closed form. While ``v`` stays large the true
``r`` is squeezed between the ``delta/2`` and ``delta`` versions of ``r1``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .model import ConditionReport, ModelParams, check_condition
from .ode import Trajectory

DEFAULT_DOMINATION_TOL = 1e-6
W4_INFLATION = 1.0 + 1e-9


class DomainError(ValueError):
    """Evaluation at or beyond the closed-form blow-up time."""


class ConditionNotSatisfied(ValueError):
    """The boundedness condition fails, so no admissible delta exists."""


class InconclusiveComparison(RuntimeError):
    """The trajectory ends before the comparison window does."""


@dataclass(frozen=True)
class OracleConfig:
    delta: float
    k: float
    w4: float | None = None
    v1_0: float | None = None
    r1_0: float | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta!r}")
        if not 0 < self.k < 1:
            raise ValueError(f"k must lie in (0, 1), got {self.k!r}")
        if self.w4 is not None and not self.w4 > 0:
            raise ValueError(f"w4 must be positive, got {self.w4!r}")
        for name in ("v1_0", "r1_0"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive, got {value!r}")

    def with_data(self, v1_0: float, r1_0: float) -> "OracleConfig":
        return OracleConfig(self.delta, self.k, self.w4, float(v1_0), float(r1_0))

    def loss_rate(self, p: ModelParams) -> float:
        """Predation coefficient used in the comparison ``v1`` equation."""
        return p.w2 if self.w4 is None else self.w4

    @property
    def window(self) -> float:
        """Length of the comparison window, ``1 / (2 delta r1(0))``."""
        if self.r1_0 is None:
            raise ValueError("r1_0 not set")
        return 1.0 / (2.0 * self.delta * self.r1_0)

    def as_dict(self) -> dict:
        return asdict(self)


def blowup_time_r1(r1_0: float, delta: float) -> float:
    return 1.0 / (delta * r1_0)


def exact_r1(r1_0: float, delta: float, t):
    """``1 / (1/r1_0 - delta t)``, the solution of ``r1' = delta r1^2``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t >= blowup_time_r1(r1_0, delta)):
        raise DomainError(f"t must lie in [0, {blowup_time_r1(r1_0, delta)!r})")
    out = 1.0 / (1.0 / r1_0 - delta * t)
    return float(out) if out.ndim == 0 else out


def exact_v1(v1_0: float, r1_0: float, a2: float, w2: float, delta: float, t):
    """``v1_0 exp(-a2 t) (1 - r1_0 delta t)^(w2/delta)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t >= blowup_time_r1(r1_0, delta)):
        raise DomainError(f"t must lie in [0, {blowup_time_r1(r1_0, delta)!r})")
    out = v1_0 * np.exp(-a2 * t) * (1.0 - r1_0 * delta * t) ** (w2 / delta)
    return float(out) if out.ndim == 0 else out


def choose_delta(p: ModelParams, report: ConditionReport | None = None) -> float:
    """Midpoint of ``(c, k w3/D3)``."""
    if report is None:
        report = check_condition(p)
    if not report.satisfied:
        raise ConditionNotSatisfied(
            f"c = {report.c!r} is not below k*w3/D3 = {report.rhs!r}; "
            "the comparison construction needs c < k*w3/D3")
    delta = 0.5 * (report.c + report.rhs)
    if not report.c < delta < report.rhs:
        # the interval is narrower than float spacing
        raise ConditionNotSatisfied("interval (c, k*w3/D3) too narrow to pick delta")
    return delta


def choose_w4(p: ModelParams) -> float | None:
    """Replacement predation rate when ``D2 < 1``.

    ``w4 D2 >= w2`` gives ``w2 v r / (v + D2) <= w4 v r`` for all ``v >= 0``.
    """
    if p.D2 >= 1.0:
        return None
    return p.w2 / p.D2 * W4_INFLATION


def make_oracle_config(p: ModelParams, report: ConditionReport | None = None) -> OracleConfig:
    if report is None:
        report = check_condition(p)
    return OracleConfig(delta=choose_delta(p, report), k=report.k, w4=choose_w4(p))


class VThreshold(NamedTuple):
    value: float
    interesting: bool


def v_threshold(p: ModelParams, k: float, delta: float) -> VThreshold:
    """``1 / (k/D3 - delta/(2 w3)) - D3``; flagged uninteresting when <= 0."""
    divisor = k / p.D3 - delta / (2.0 * p.w3)
    if not divisor > 0:
        raise ValueError(f"k/D3 - delta/(2 w3) = {divisor!r} must be positive")
    value = 1.0 / divisor - p.D3
    return VThreshold(value, value > 0)


def sharp_v_threshold(p: ModelParams, delta: float) -> float:
    """Smallest ``v`` with ``w3/(v+D3) + delta/2 <= c``.

    Stronger than :func:`v_threshold`, which has ``k w3/D3`` where this has
    ``c``.
    """
    gap = p.c - 0.5 * delta
    if not gap > 0:
        raise ValueError(f"c - delta/2 = {gap!r} must be positive")
    return p.w3 / gap - p.D3


def required_v(p: ModelParams, oc: OracleConfig) -> float:
    return max(v_threshold(p, oc.k, oc.delta).value, sharp_v_threshold(p, oc.delta), 0.0)


def _endpoint_v1(p: ModelParams, oc: OracleConfig, v0: float, r0: float) -> float:
    # Both factors of v1(t) decrease on the window (derivative of the
    # exponential is -a2 < 0, the power has exponent w/delta > 0 on a base
    # falling from 1 to 1/2), so the minimum over the window is the endpoint.
    return v0 * math.exp(-p.a2 / (2.0 * oc.delta * r0)) * 0.5 ** (oc.loss_rate(p) / oc.delta)


def choose_blowup_data(p: ModelParams, oc: OracleConfig, safety: float = 1.0,
                       max_doublings: int = 200) -> tuple[float, float]:
    """Find ``(v0, r0)`` keeping ``v1`` above the threshold on the whole window.

    Starts from ``v0 = max(threshold, 1)``, ``r0 = 1`` and doubles both until
    ``v1(1/(2 delta r0)) > safety * threshold``.
    """
    if safety < 1:
        raise ValueError("safety must be >= 1")
    need = required_v(p, oc) * safety
    v0, r0 = max(need, 1.0), 1.0
    for _ in range(max_doublings):
        if _endpoint_v1(p, oc, v0, r0) > need:
            return v0, r0
        v0 *= 2.0
        r0 *= 2.0
    raise RuntimeError(f"no blow-up data found after {max_doublings} doublings")


def blowup_oracle(p: ModelParams, safety: float = 1.0) -> OracleConfig:
    """Condition check, delta, w4 and initial data in one call."""
    oc = make_oracle_config(p)
    return oc.with_data(*choose_blowup_data(p, oc, safety))


def modified_system_rhs(p: ModelParams, oc: OracleConfig, delta: float | None = None):
    """Right-hand side of the comparison system for ``(u1, v1, r1)``."""
    d = oc.delta if delta is None else delta
    w = oc.loss_rate(p)

    def rhs(t, y):
        u1, v1, r1 = y
        return np.array([
            p.a1 * u1 - p.b1 * u1 * u1 - p.w0 * u1 * v1 / (u1 + p.D0),
            -p.a2 * v1 - w * v1 * r1,
            d * r1 * r1,
        ])
    return rhs


def comparison_curves(p: ModelParams, oc: OracleConfig, t):
    """``v1`` (rate delta) and the lower comparison ``r1`` (rate delta/2)."""
    v1 = exact_v1(oc.v1_0, oc.r1_0, p.a2, oc.loss_rate(p), oc.delta, t)
    r1 = exact_r1(oc.r1_0, 0.5 * oc.delta, t)
    return v1, r1


def check_domination(full: Trajectory, oc: OracleConfig, p: ModelParams,
                     tol: float = DEFAULT_DOMINATION_TOL) -> bool:
    """True iff ``v >= v1`` and ``r >= r1`` (rate ``delta/2``) on the window.

    Each comparison allows a slack of ``tol * (1 + |value|)``.
    """
    if oc.v1_0 is None or oc.r1_0 is None:
        raise ValueError("oracle config carries no initial data")
    end = oc.window
    if full.times[-1] < end * (1 - 1e-12):
        raise InconclusiveComparison(
            f"trajectory ends at t={full.times[-1]!r} before the window end {end!r}")
    mask = full.times <= end * (1 + 1e-12)
    t = np.minimum(full.times[mask], end)
    v1, r1 = comparison_curves(p, oc, t)
    v, r = full.v[mask], full.r[mask]
    ok_v = v >= v1 - tol * (1 + np.abs(v1))
    ok_r = r >= r1 - tol * (1 + np.abs(r1))
    return bool(np.all(ok_v) and np.all(ok_r))


@dataclass
class PsiTrace:
    times: np.ndarray
    psi_values: np.ndarray
    crossing_time: float | None
    extrapolated: bool = False


def psi_trace(traj: Trajectory, p: ModelParams, r0: float, extrapolate: bool = False) -> PsiTrace:
    """``psi(t) = 1/r0 - c t + w3 int_0^t ds / (v + D3)`` by the trapezoid rule.

    ``psi = 1/r`` along exact solutions, so its first zero is the blow-up
    time. With ``extrapolate`` a trace that is still positive at its last
    sample is continued with its final slope ``w3/(v+D3) - c`` when that slope
    is negative.
    """
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    t = np.asarray(traj.times, dtype=float)
    g = 1.0 / (traj.v + p.D3)
    integral = np.concatenate(([0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(t))))
    psi = 1.0 / r0 - p.c * t + p.w3 * integral

    crossing = None
    extrapolated = False
    hits = np.flatnonzero(psi <= 0)
    if hits.size:
        i = int(hits[0])
        t0, t1, s0, s1 = t[i - 1], t[i], psi[i - 1], psi[i]
        crossing = float(t1 if s1 == 0 else t0 + s0 * (t1 - t0) / (s0 - s1))
    elif extrapolate:
        slope = p.w3 * g[-1] - p.c
        if slope < 0:
            crossing = float(t[-1] + psi[-1] / -slope)
            extrapolated = True
    return PsiTrace(times=t, psi_values=psi, crossing_time=crossing, extrapolated=extrapolated)


def write_psi_csv(trace: PsiTrace, path) -> None:
    with open(path, "w") as fh:
        fh.write("t,psi\n")
        for t, s in zip(trace.times, trace.psi_values):
            fh.write(f"{t:.17g},{s:.17g}\n")
