"""Explicit finite differences for the reaction-diffusion food chain.

Vertex-centred grids on ``[0, Lx]`` (1D) or ``[0, Lx] x [0, Ly]`` (2D).
Neumann boundaries use mirror ghost nodes, which keeps the scheme second
order and makes the trapezoid-weighted mass exactly conserved by the discrete
Laplacian. Dirichlet boundaries hold the boundary nodes at zero.
"""
from __future__ import annotations

import enum
import math
import os
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, per_capita_rates, reaction
from .ode import BlowUpReport, DetectionMethod, NoBlowUpEvidence, SPECIES, estimate_blowup_time

NEGATIVITY_TOL = 1e-10


class BoundaryCondition(enum.Enum):
    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"


class CFLViolation(ValueError):
    pass


class PdeStatus(enum.Enum):
    REACHED_T_END = "ReachedTEnd"
    BLOW_UP_DETECTED = "BlowUpDetected"
    DIVERGED = "Diverged"
    NEGATIVITY_VIOLATION = "NegativityViolation"


@dataclass(frozen=True)
class GridSpec:
    """Spatial discretization, time step and diffusion coefficients.

    ``dx = Lx / (nx - 1)``. The stability bound checked at construction is
    ``dt <= 1 / (2 max(d) sum(1/dx_i^2))``, i.e. ``dx^2 / (2 dim max(d))``
    for equal spacings.
    """

    dim: int = 1
    nx: int = 315
    ny: int = 1
    Lx: float = math.pi
    Ly: float = math.pi
    dt: float = 0.01
    bc: BoundaryCondition = BoundaryCondition.NEUMANN
    d1: float = 1e-3
    d2: float = 1e-3
    d3: float = 1e-3
    on_cfl_violation: str = "raise"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim!r}")
        if self.dim == 1 and self.ny != 1:
            object.__setattr__(self, "ny", 1)
        if self.nx < 3 or (self.dim == 2 and self.ny < 3):
            raise ValueError("need at least 3 nodes per direction")
        for name in ("Lx", "Ly", "dt", "d1", "d2", "d3"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a finite positive number, got {value!r}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "bc", BoundaryCondition(self.bc))
        if self.on_cfl_violation not in ("raise", "warn"):
            raise ValueError("on_cfl_violation must be 'raise' or 'warn'")
        if self.dt > self.cfl_limit:
            msg = f"dt = {self.dt} exceeds the explicit diffusion bound {self.cfl_limit:.6g}"
            if self.on_cfl_violation == "raise":
                raise CFLViolation(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)

    @classmethod
    def from_spacing(cls, dim: int = 1, dx: float = 0.01, dy: float | None = None,
                     Lx: float = math.pi, Ly: float = math.pi, **kwargs) -> "GridSpec":
        """Grid with ``round(L/dx) + 1`` nodes; the spacing is then recomputed."""
        nx = int(round(Lx / dx)) + 1
        ny = int(round(Ly / (dx if dy is None else dy))) + 1 if dim == 2 else 1
        return cls(dim=dim, nx=nx, ny=ny, Lx=Lx, Ly=Ly, **kwargs)

    @property
    def dx(self) -> float:
        return self.Lx / (self.nx - 1)

    @property
    def dy(self) -> float:
        return self.Ly / (self.ny - 1) if self.dim == 2 else math.nan

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nx,) if self.dim == 1 else (self.ny, self.nx)

    @property
    def diffusion(self) -> tuple[float, float, float]:
        return (self.d1, self.d2, self.d3)

    @property
    def cfl_limit(self) -> float:
        inv = 1.0 / self.dx ** 2 + (1.0 / self.dy ** 2 if self.dim == 2 else 0.0)
        return 1.0 / (2.0 * max(self.diffusion) * inv)

    @property
    def area(self) -> float:
        return self.Lx if self.dim == 1 else self.Lx * self.Ly

    def coordinates(self):
        x = np.linspace(0.0, self.Lx, self.nx)
        if self.dim == 1:
            return (x,)
        y = np.linspace(0.0, self.Ly, self.ny)
        return np.meshgrid(x, y, indexing="xy")

    def cell_weights(self) -> np.ndarray:
        """Trapezoid quadrature weights; they sum to the domain measure."""
        wx = np.full(self.nx, self.dx)
        wx[[0, -1]] *= 0.5
        if self.dim == 1:
            return wx
        wy = np.full(self.ny, self.dy)
        wy[[0, -1]] *= 0.5
        return np.outer(wy, wx)

    def as_dict(self) -> dict:
        return {
            "dim": self.dim, "nx": self.nx, "ny": self.ny, "Lx": self.Lx, "Ly": self.Ly,
            "dx": self.dx, "dy": None if self.dim == 1 else self.dy, "dt": self.dt,
            "bc": self.bc.value, "d1": self.d1, "d2": self.d2, "d3": self.d3,
            "on_cfl_violation": self.on_cfl_violation,
        }


@dataclass
class Field:
    """Scalar field on a grid; 2D values are indexed ``[j, i]`` = ``(y_j, x_i)``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values have shape {self.values.shape}, grid expects {self.grid.shape}")

    def linf(self) -> float:
        return float(np.max(np.abs(self.values)))

    def lp(self, p: float) -> float:
        return lp_norm(self.values, self.grid, p)

    def mass(self) -> float:
        return float(np.sum(self.values * self.grid.cell_weights()))


def lp_norm(values, grid: GridSpec, p: float) -> float:
    """``(|Omega|^-1 sum |u|^p w)^(1/p)`` with trapezoid weights ``w``."""
    w = grid.cell_weights()
    return float((np.sum(np.abs(values) ** p * w) / grid.area) ** (1.0 / p))


def _laplacian_array(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    neumann = grid.bc is BoundaryCondition.NEUMANN
    mode = "reflect" if neumann else "constant"
    if grid.dim == 1:
        fp = np.pad(f, 1, mode=mode)
        lap = (fp[2:] - 2.0 * f + fp[:-2]) / grid.dx ** 2
        if not neumann:
            lap[[0, -1]] = 0.0
        return lap
    fp = np.pad(f, 1, mode=mode)
    lap = ((fp[1:-1, 2:] - 2.0 * f + fp[1:-1, :-2]) / grid.dx ** 2
           + (fp[2:, 1:-1] - 2.0 * f + fp[:-2, 1:-1]) / grid.dy ** 2)
    if not neumann:
        lap[[0, -1], :] = 0.0
        lap[:, [0, -1]] = 0.0
    return lap


def laplacian(f: Field) -> Field:
    """Three-point (1D) or five-point (2D) discrete Laplacian."""
    return Field(f.grid, _laplacian_array(f.values, f.grid))


def _apply_dirichlet(arrays, grid: GridSpec):
    if grid.bc is not BoundaryCondition.DIRICHLET:
        return
    for a in arrays:
        if grid.dim == 1:
            a[[0, -1]] = 0.0
        else:
            a[[0, -1], :] = 0.0
            a[:, [0, -1]] = 0.0


@dataclass
class StepStats:
    clamped: int = 0


def _clamp(a: np.ndarray, stats: StepStats) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(a))))
    tiny = (a < 0) & (a > -NEGATIVITY_TOL * scale)
    n = int(np.count_nonzero(tiny))
    if n:
        stats.clamped += n
        a = np.where(tiny, 0.0, a)
    return a


def _tendency(p, grid, fields, stats, reactions=True):
    u, v, r = (_clamp(a, stats) for a in fields)
    if reactions:
        ru, rv, rr = reaction(p, u, v, r)
    else:
        ru = rv = rr = 0.0
    d1, d2, d3 = grid.diffusion
    return (d1 * _laplacian_array(u, grid) + ru,
            d2 * _laplacian_array(v, grid) + rv,
            d3 * _laplacian_array(r, grid) + rr)


def step(fields, p: ModelParams, g: GridSpec, scheme: str = "euler",
         reactions: bool = True, stats: StepStats | None = None, dt: float | None = None):
    """Advance ``(u, v, r)`` arrays by one time step (``g.dt`` unless given).

    ``scheme='euler'`` is forward Euler; ``'rk4'`` is the classical
    four-stage method, offered to check that results do not hinge on the time
    discretization. ``reactions=False`` leaves pure diffusion.
    """
    if stats is None:
        stats = StepStats()
    if dt is None:
        dt = g.dt
    elif dt > g.dt * (1 + 1e-9):
        raise ValueError("dt may not exceed the grid's stable step")
    fields = tuple(np.asarray(a, dtype=float) for a in fields)
    if scheme == "euler":
        k1 = _tendency(p, g, fields, stats, reactions)
        new = [a + dt * k for a, k in zip(fields, k1)]
    elif scheme == "rk4":
        k1 = _tendency(p, g, fields, stats, reactions)
        k2 = _tendency(p, g, [a + 0.5 * dt * k for a, k in zip(fields, k1)], stats, reactions)
        k3 = _tendency(p, g, [a + 0.5 * dt * k for a, k in zip(fields, k2)], stats, reactions)
        k4 = _tendency(p, g, [a + dt * k for a, k in zip(fields, k3)], stats, reactions)
        new = [a + dt / 6.0 * (q1 + 2 * q2 + 2 * q3 + q4)
               for a, q1, q2, q3, q4 in zip(fields, k1, k2, k3, k4)]
    else:
        raise ValueError(f"unknown time scheme {scheme!r}")
    _apply_dirichlet(new, g)
    return tuple(new)


def reaction_step_limit(p: ModelParams, fields, max_change: float) -> float:
    """Largest dt keeping every per-capita reaction change below ``max_change``."""
    u, v, r = (np.maximum(a, 0.0) for a in fields)
    rate = max(float(np.max(np.abs(g))) for g in per_capita_rates(p, u, v, r))
    return math.inf if rate == 0 else max_change / rate


@dataclass(frozen=True)
class InitialData:
    """Initial fields.

    ``uniform``: constant ``base``. ``gaussian``: ``base + amplitude *
    exp(-|x - center|^2 / (2 width^2))`` per species. ``cosine``: ``base +
    amplitude * cos(mode x) [cos(mode y)]``, which is Neumann compatible.
    Per-species entries are triples ordered ``(u, v, r)``; ``center`` is one
    point per species.
    """

    kind: str = "uniform"
    base: tuple[float, float, float] = (1.0, 1.0, 1.0)
    amplitude: tuple[float, float, float] = (0.0, 0.0, 0.0)
    center: tuple | None = None
    width: tuple[float, float, float] = (0.5, 0.5, 0.5)
    mode: int = 1

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian", "cosine"):
            raise ValueError(f"unknown initial data kind {self.kind!r}")
        for name in ("base", "amplitude", "width"):
            value = getattr(self, name)
            if np.ndim(value) == 0:
                value = (value,) * 3
            value = tuple(float(x) for x in value)
            if len(value) != 3:
                raise ValueError(f"{name} needs one entry per species")
            object.__setattr__(self, name, value)
        if min(self.base) < 0:
            raise ValueError("base values must be nonnegative")
        if self.kind == "gaussian" and (min(self.amplitude) < 0 or min(self.width) <= 0):
            raise ValueError("gaussian bumps need nonnegative amplitude and positive width")
        if self.kind == "cosine" and any(abs(a) > b for a, b in zip(self.amplitude, self.base)):
            raise ValueError("cosine amplitude may not exceed the base value (negative data)")

    @classmethod
    def uniform(cls, u: float, v: float, r: float) -> "InitialData":
        return cls(kind="uniform", base=(u, v, r))

    def build(self, grid: GridSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coords = grid.coordinates()
        out = []
        for s in range(3):
            f = np.full(grid.shape, self.base[s])
            if self.kind == "gaussian":
                if self.center is None:
                    c = [grid.Lx / 2, grid.Ly / 2][:grid.dim]
                else:
                    c = np.atleast_1d(self.center[s])
                dist2 = sum((x - ci) ** 2 for x, ci in zip(coords, c))
                f = f + self.amplitude[s] * np.exp(-dist2 / (2.0 * self.width[s] ** 2))
            elif self.kind == "cosine":
                shape = np.ones(grid.shape)
                for x in coords:
                    shape = shape * np.cos(self.mode * x)
                f = f + self.amplitude[s] * shape
            out.append(f)
        _apply_dirichlet(out, grid)
        return tuple(out)

    def as_dict(self) -> dict:
        return {"kind": self.kind, "base": list(self.base), "amplitude": list(self.amplitude),
                "center": None if self.center is None else [list(np.atleast_1d(c)) for c in self.center],
                "width": list(self.width), "mode": self.mode}


@dataclass(frozen=True)
class StopRule:
    t_end: float = 200.0
    threshold: float = 1e10
    sample_stride: float = 0.1
    snapshot_times: tuple[float, ...] = ()


@dataclass
class NormHistory:
    times: list[float] = field(default_factory=list)
    linf: dict[str, list[float]] = field(default_factory=lambda: {s: [] for s in SPECIES})
    lp: dict[int, dict[str, list[float]]] = field(
        default_factory=lambda: {p: {s: [] for s in SPECIES} for p in (1, 2)})

    def record(self, t: float, fields, grid: GridSpec) -> None:
        self.times.append(t)
        for name, a in zip(SPECIES, fields):
            self.linf[name].append(float(np.max(np.abs(a))))
            for p in (1, 2):
                self.lp[p][name].append(lp_norm(a, grid, p))

    def series(self, species: str, norm="linf") -> np.ndarray:
        if norm == "linf":
            return np.array(self.linf[species])
        return np.array(self.lp[int(norm)][species])

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,species,linf,l1,l2\n")
            for i, t in enumerate(self.times):
                for s in SPECIES:
                    fh.write(f"{t:.17g},{s},{self.linf[s][i]:.17g},"
                             f"{self.lp[1][s][i]:.17g},{self.lp[2][s][i]:.17g}\n")


@dataclass
class PdeResult:
    norms: NormHistory
    report: BlowUpReport
    status: PdeStatus
    t_final: float
    fields: tuple[np.ndarray, np.ndarray, np.ndarray]
    snapshots: dict[tuple[str, float], np.ndarray]
    clamped: int
    steps: int
    message: str = ""


def run(p: ModelParams, g: GridSpec, init: InitialData, stop: StopRule | None = None,
        scheme: str = "euler", reactions: bool = True, max_change: float | None = 0.1,
        n_fit: int = 8) -> PdeResult:
    """March forward until ``t_end``, L-infinity escape, divergence or a
    negativity violation.

    Each step uses ``min(g.dt, max_change / rate)`` where ``rate`` is the
    largest per-capita reaction rate on the grid, clipped so that sample and
    snapshot times are hit exactly. Away from blow-up this is just ``g.dt``;
    as a component escapes the step shrinks like the inverse of its size,
    which keeps the explicit update positive and resolves the approach to
    the blow-up time. ``max_change=None`` forces the fixed step ``g.dt``.
    """
    if stop is None:
        stop = StopRule()
    fields = init.build(g)
    if any(np.min(a) < 0 for a in fields):
        raise ValueError("initial data must be nonnegative")
    stats = StepStats()
    norms = NormHistory()
    norms.record(0.0, fields, g)
    snapshots = {}
    pending_snaps = sorted(ts for ts in stop.snapshot_times if 0 < ts <= stop.t_end)
    if any(ts == 0 for ts in stop.snapshot_times):
        snapshots.update({(s, 0.0): a.copy() for s, a in zip(SPECIES, fields)})
    tail = deque([(0.0, tuple(float(np.max(a)) for a in fields))], maxlen=256)
    # float slack when comparing against event times built from dt multiples
    eps = 1e-9 * g.dt

    status, message = PdeStatus.REACHED_T_END, ""
    n = 0
    t = 0.0
    sample_index = 1
    while t < stop.t_end - eps:
        next_sample = min(sample_index * stop.sample_stride, stop.t_end)
        target = min([next_sample] + pending_snaps[:1])
        dt = g.dt if max_change is None else min(g.dt, reaction_step_limit(p, fields, max_change))
        landing = dt >= target - t - eps
        if landing:
            dt = target - t
        new = step(fields, p, g, scheme=scheme, reactions=reactions, stats=stats, dt=dt)
        n += 1
        t = target if landing else t + dt
        if not all(np.all(np.isfinite(a)) for a in new):
            status, message = PdeStatus.DIVERGED, f"non-finite values at t={t!r}"
            break
        fields = new
        maxima = tuple(float(np.max(np.abs(a))) for a in fields)
        tail.append((t, maxima))
        worst = min(float(np.min(a)) for a in fields)
        if worst < -NEGATIVITY_TOL * max(1.0, max(maxima)):
            status, message = PdeStatus.NEGATIVITY_VIOLATION, f"min value {worst!r} at t={t!r}"
            break
        if landing and pending_snaps and t == pending_snaps[0]:
            snapshots.update({(s, t): a.copy() for s, a in zip(SPECIES, fields)})
            pending_snaps.pop(0)
        escaped = max(maxima) > stop.threshold
        on_sample = landing and t == next_sample
        if on_sample:
            sample_index += 1
        if on_sample or escaped:
            norms.record(t, fields, g)
        if escaped:
            status = PdeStatus.BLOW_UP_DETECTED
            break
    if norms.times[-1] != t:
        norms.record(t, fields, g)

    report = BlowUpReport(detected=False)
    if status is PdeStatus.BLOW_UP_DETECTED:
        comp = int(np.argmax(tail[-1][1]))
        evidence = [(tt, m[comp]) for tt, m in tail]
        try:
            t_est = estimate_blowup_time(_resolved_tail(evidence, n_fit))
        except NoBlowUpEvidence:
            t_est = t
        report = BlowUpReport(detected=True, t_estimate=max(t_est, t), component=SPECIES[comp],
                              evidence=evidence, method=DetectionMethod.NORM_ESCAPE)
    return PdeResult(norms=norms, report=report, status=status, t_final=t, fields=fields,
                     snapshots=snapshots, clamped=stats.clamped, steps=n, message=message)


def _resolved_tail(evidence, n_fit, max_growth=0.1):
    """Last increasing samples whose next step grew by at most ``max_growth``.

    Once ``dt * rate`` is no longer small a fixed-step scheme overshoots and
    ``1/value`` stops being close to affine; those final steps are skipped.
    """
    pts = []
    for (t0, a), (_, b) in zip(evidence[:-1], evidence[1:]):
        if a > 0 and b > a and (b - a) / a <= max_growth:
            pts.append((t0, a))
    out = []
    for t0, a in reversed(pts):
        if out and not (a < out[-1][1] and t0 < out[-1][0]):
            break
        out.append((t0, a))
        if len(out) >= n_fit:
            break
    return out[::-1]


def write_snapshot(path, values: np.ndarray, grid: GridSpec, t: float) -> None:
    """First line ``nx ny t``; then one line per grid row (x fastest)."""
    rows = np.atleast_2d(values)
    with open(path, "w") as fh:
        fh.write(f"{grid.nx} {grid.ny} {t:.17g}\n")
        for row in rows:
            fh.write(" ".join(format(x, ".17g") for x in row) + "\n")


def read_snapshot(path) -> tuple[np.ndarray, float]:
    with open(path) as fh:
        nx, ny, t = fh.readline().split()
        data = np.loadtxt(fh, ndmin=2)
    data = data.reshape(int(ny), int(nx))
    return (data[0] if int(ny) == 1 else data), float(t)


def write_snapshots(result: PdeResult, grid: GridSpec, out_dir) -> list[str]:
    paths = []
    ordered = sorted(result.snapshots.items(), key=lambda kv: (kv[0][1], SPECIES.index(kv[0][0])))
    times = sorted({t for _, t in result.snapshots})
    for (species, t), values in ordered:
        name = os.path.join(out_dir, f"snapshot_{species}_{times.index(t):04d}.txt")
        write_snapshot(name, values, grid, t)
        paths.append(name)
    return paths
