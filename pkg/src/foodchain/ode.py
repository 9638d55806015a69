"""Adaptive Dormand-Prince 5(4) integration with finite-time blow-up detection."""
from __future__ import annotations

import csv
import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import ModelParams, State, reaction

SPECIES = ("u", "v", "r")

# Dormand-Prince tableau. The 5th order solution is propagated (local
# extrapolation), the 4th order one only feeds the error estimate.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


class NoBlowUpEvidence(ValueError):
    """The sampled tail does not support a finite blow-up time."""


class TerminalStatus(enum.Enum):
    REACHED_T_END = "ReachedTEnd"
    BLOW_UP_DETECTED = "BlowUpDetected"
    STEP_COLLAPSE = "StepCollapse"


class DetectionMethod(enum.Enum):
    NORM_ESCAPE = "NormEscape"
    STEP_COLLAPSE = "StepCollapse"


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    h_init: float = 1e-3
    h_min: float = 1e-14
    h_max: float = 1.0
    threshold: float = 1e10
    t_end: float = 100.0
    sample_stride: float = 0.1

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "h_init", "h_min", "h_max", "threshold",
                     "t_end", "sample_stride"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a finite positive number, got {value!r}")
            object.__setattr__(self, name, value)
        if not self.h_min < self.h_init <= self.h_max:
            raise ValueError(
                f"need h_min < h_init <= h_max, got {self.h_min}, {self.h_init}, {self.h_max}")

    def replace(self, **changes) -> "IntegratorConfig":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return IntegratorConfig(**values)


@dataclass
class BlowUpReport:
    detected: bool
    t_estimate: float | None = None
    component: str | None = None
    evidence: list[tuple[float, float]] = field(default_factory=list)
    method: DetectionMethod | None = None

    def as_dict(self) -> dict:
        return {
            "detected": self.detected,
            "t_estimate": self.t_estimate,
            "component": self.component,
            "method": None if self.method is None else self.method.value,
            "evidence_points": len(self.evidence),
        }


@dataclass
class Trajectory:
    """Sampled solution. ``y`` has one row per entry of ``times``."""

    times: np.ndarray
    y: np.ndarray
    terminal_status: TerminalStatus
    blowup: BlowUpReport
    names: tuple[str, ...] = SPECIES
    n_accepted: int = 0
    n_rejected: int = 0
    min_value: float = 0.0
    step_history: list[tuple[float, float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    def component(self, name: str) -> np.ndarray:
        return self.y[:, self.names.index(name)]

    @property
    def u(self) -> np.ndarray:
        return self.component("u")

    @property
    def v(self) -> np.ndarray:
        return self.component("v")

    @property
    def r(self) -> np.ndarray:
        return self.component("r")

    @property
    def states(self) -> list[State]:
        # solver-level negatives (>= -10 abs_tol) are clipped for the State view
        return [State.from_sequence(np.maximum(row, 0.0)) for row in self.y]


def _error_norm(err, y_old, y_new, rel_tol, abs_tol) -> float:
    scale = abs_tol + rel_tol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def integrate_generic(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    s0: Sequence[float],
    cfg: IntegratorConfig,
    names: Sequence[str] | None = None,
    evidence_size: int = 256,
) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` from ``t = 0``.

    Steps are clipped so that every multiple of ``cfg.sample_stride`` is hit
    exactly; the sampled values are therefore genuine solver states, not
    interpolants. The run stops at ``t_end``, when any component exceeds
    ``cfg.threshold`` or when the step size falls below ``cfg.h_min``.
    """
    y = np.array(s0, dtype=float)
    if y.ndim != 1:
        raise ValueError("initial state must be one-dimensional")
    dim = y.size
    if names is None:
        names = tuple(f"y{i}" for i in range(dim))
    names = tuple(names)
    if len(names) != dim:
        raise ValueError("names must match the state dimension")

    t = 0.0
    times = [t]
    samples = [y.copy()]
    tail = deque([(t, y.copy())], maxlen=evidence_size)
    step_history: list[tuple[float, float]] = []
    n_acc = n_rej = 0
    min_value = float(y.min())
    sample_index = 1
    h = min(cfg.h_init, cfg.h_max)
    k = np.empty((7, dim))
    k[0] = rhs(t, y)
    status = TerminalStatus.REACHED_T_END

    while True:
        if t >= cfg.t_end:
            break
        target = min(cfg.t_end, sample_index * cfg.sample_stride)
        remaining = target - t
        clipped = h >= remaining
        h_step = remaining if clipped else h

        for i in range(1, 7):
            dy = np.dot(_A[i], k[:i])
            k[i] = rhs(t + _C[i] * h_step, y + h_step * dy)
        y_new = y + h_step * np.dot(_B5[:6], k[:6])
        err = _error_norm(h_step * np.dot(_E, k), y, y_new, cfg.rel_tol, cfg.abs_tol)
        if not math.isfinite(err) or not np.all(np.isfinite(y_new)):
            err = math.inf

        if err <= 1.0:
            n_acc += 1
            t_new = target if clipped else t + h_step
            if t_new <= t:
                status = TerminalStatus.STEP_COLLAPSE
                break
            t, y = t_new, y_new
            k[0] = k[6]
            min_value = min(min_value, float(y.min()))
            tail.append((t, y.copy()))
            step_history.append((t, h_step))
            escaped = bool(np.any(np.abs(y) > cfg.threshold))
            if clipped or escaped:
                times.append(t)
                samples.append(y.copy())
                if clipped:
                    sample_index += 1
            if escaped:
                status = TerminalStatus.BLOW_UP_DETECTED
                break
            factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err ** -0.2))
            h_next = h_step * factor
            if clipped:
                h_next = max(h_next, h)
            h = min(h_next, cfg.h_max)
            if not clipped and h_step < cfg.h_min:
                status = TerminalStatus.STEP_COLLAPSE
                break
        else:
            n_rej += 1
            factor = MIN_FACTOR if not math.isfinite(err) else max(MIN_FACTOR, SAFETY * err ** -0.2)
            h = h_step * factor
            if h < cfg.h_min or t + h == t:
                status = TerminalStatus.STEP_COLLAPSE
                break

    if times[-1] != t:
        times.append(t)
        samples.append(y.copy())

    report = _build_report(status, tail, names)
    return Trajectory(
        times=np.array(times),
        y=np.array(samples),
        terminal_status=status,
        blowup=report,
        names=names,
        n_accepted=n_acc,
        n_rejected=n_rej,
        min_value=min_value,
        step_history=step_history,
    )


def _build_report(status, tail, names, n_fit: int = 8) -> BlowUpReport:
    if status is TerminalStatus.REACHED_T_END:
        return BlowUpReport(detected=False)
    last = tail[-1][1]
    comp = int(np.argmax(np.abs(last)))
    evidence = [(t, float(y[comp])) for t, y in tail]
    if status is TerminalStatus.STEP_COLLAPSE:
        # collapse without escape may be stiffness; keep the evidence, claim nothing
        return BlowUpReport(detected=False, component=names[comp], evidence=evidence,
                            method=DetectionMethod.STEP_COLLAPSE)
    try:
        t_est = estimate_blowup_time(_increasing_tail(evidence, n_fit))
    except NoBlowUpEvidence:
        t_est = evidence[-1][0]
    return BlowUpReport(detected=True, t_estimate=t_est, component=names[comp],
                        evidence=evidence, method=DetectionMethod.NORM_ESCAPE)


def _increasing_tail(evidence, n_fit):
    """Longest strictly increasing positive run at the end, capped at ``n_fit``."""
    out = [evidence[-1]]
    for t, val in reversed(evidence[:-1]):
        if len(out) >= n_fit or not (0 < val < out[-1][1]):
            break
        out.append((t, val))
    return out[::-1]


def estimate_blowup_time(tail: Sequence[tuple[float, float]]) -> float:
    """Extrapolate the root of a least-squares line through ``(t, 1/value)``.

    For ``r' = delta r^2`` the reciprocal is exactly affine in time, so the
    root is the blow-up time.
    """
    if len(tail) < 3:
        raise NoBlowUpEvidence("need at least 3 samples")
    t = np.array([p[0] for p in tail], dtype=float)
    val = np.array([p[1] for p in tail], dtype=float)
    if np.any(np.diff(t) <= 0):
        raise NoBlowUpEvidence("sample times must be strictly increasing")
    if np.any(val <= 0) or np.any(np.diff(val) <= 0):
        raise NoBlowUpEvidence("values must be positive and strictly increasing")
    t_last = t[-1]
    s = t - t_last
    recip = 1.0 / val
    slope, intercept = np.polyfit(s, recip, 1)
    if not slope < 0:
        raise NoBlowUpEvidence("reciprocal is not decreasing")
    root = t_last - intercept / slope
    if not (math.isfinite(root) and root >= t_last):
        raise NoBlowUpEvidence(f"extrapolated root {root!r} precedes the data window")
    return float(root)


def food_chain_rhs(p: ModelParams) -> Callable[[float, np.ndarray], np.ndarray]:
    def rhs(t, y):
        return np.array(reaction(p, y[0], y[1], y[2]))
    return rhs


def integrate(p: ModelParams, s0: State, cfg: IntegratorConfig) -> Trajectory:
    if not isinstance(s0, State):
        s0 = State.from_sequence(s0)
    return integrate_generic(food_chain_rhs(p), s0.as_array(), cfg, names=SPECIES)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("t",) + tuple(traj.names))
        for t, row in zip(traj.times, traj.y):
            writer.writerow([format(t, ".17g")] + [format(x, ".17g") for x in row])
