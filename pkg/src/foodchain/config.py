"""Strict TOML run configurations.

Layout::

    mode = "simulate-ode"        # optional; must agree with the subcommand
    output_dir = "runs/ode"      # optional; --out overrides

    [model]                      # always required, all twelve keys
    a1 = 1.0
    ...

    [initial]                    # simulate-*, psi-trace; optional for oracle-compare
    kind = "uniform"             # uniform | oracle | gaussian | cosine
    ...

    [integrator]                 # optional; keys depend on the mode
    [grid]                       # optional; PDE modes only

Unknown sections and keys are errors, and every problem found is reported
together.
"""
from __future__ import annotations

import enum
import math
import re
import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import PARAM_NAMES, ModelParams, ParameterError
from .ode import IntegratorConfig
from .pde import CFLViolation, GridSpec, InitialData


class Mode(enum.Enum):
    CHECK_CONDITION = "check-condition"
    ODE = "simulate-ode"
    PDE1D = "simulate-pde1d"
    PDE2D = "simulate-pde2d"
    ORACLE_COMPARE = "oracle-compare"
    PSI_TRACE = "psi-trace"

    @property
    def is_pde(self) -> bool:
        return self in (Mode.PDE1D, Mode.PDE2D)


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every failure found."""

    def __init__(self, problems, line: int | None = None):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        self.line = line
        super().__init__("; ".join(self.problems))


_ODE_INTEGRATOR_KEYS = {f.name for f in fields(IntegratorConfig)}
_PDE_RUN_KEYS = {"t_end", "threshold", "sample_stride", "snapshot_times", "scheme", "max_change"}
_GRID_KEYS = {"nx", "ny", "dx", "dy", "Lx", "Ly", "dt", "bc", "d1", "d2", "d3", "on_cfl_violation"}
_INITIAL_KEYS = {
    "uniform": {"kind", "u", "v", "r"},
    "oracle": {"kind", "u", "safety"},
    "gaussian": {"kind", "base", "amplitude", "center", "width"},
    "cosine": {"kind", "base", "amplitude", "mode"},
}
_SECTIONS = {
    Mode.CHECK_CONDITION: ({"model"}, set()),
    Mode.ODE: ({"model", "initial"}, {"integrator"}),
    Mode.PSI_TRACE: ({"model", "initial"}, {"integrator"}),
    Mode.ORACLE_COMPARE: ({"model"}, {"initial", "integrator"}),
    Mode.PDE1D: ({"model", "initial"}, {"integrator", "grid"}),
    Mode.PDE2D: ({"model", "initial"}, {"integrator", "grid"}),
}
_TOP_KEYS = {"mode", "output_dir"}


@dataclass(frozen=True)
class PdeRunOptions:
    t_end: float = 200.0
    threshold: float = 1e10
    sample_stride: float = 0.1
    snapshot_times: tuple[float, ...] = (0.0,)
    scheme: str = "euler"
    max_change: float | None = 0.1

    def __post_init__(self):
        for name in ("t_end", "threshold", "sample_stride"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a finite positive number, got {value!r}")
        if self.scheme not in ("euler", "rk4"):
            raise ValueError(f"scheme must be 'euler' or 'rk4', got {self.scheme!r}")
        if self.max_change is False:
            # TOML has no null; false turns the step cap off
            object.__setattr__(self, "max_change", None)
        if self.max_change is not None and not 0 < self.max_change < 1:
            raise ValueError("max_change must lie in (0, 1)")


@dataclass(frozen=True)
class InitialSpec:
    """ODE initial data or PDE initial fields, with ``oracle`` meaning data
    chosen by the blow-up construction (prey value ``u`` kept)."""

    kind: str = "uniform"
    u: float = 1.0
    v: float = 1.0
    r: float = 1.0
    safety: float = 1.0
    fields: InitialData | None = None

    def as_dict(self) -> dict:
        if self.fields is not None:
            return self.fields.as_dict()
        if self.kind == "oracle":
            return {"kind": "oracle", "u": self.u, "safety": self.safety}
        return {"kind": self.kind, "u": self.u, "v": self.v, "r": self.r}


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    mode: Mode
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    pde: PdeRunOptions | None = None
    grid: GridSpec | None = None
    initial: InitialSpec | None = None
    output_dir: str = "."

    def as_dict(self) -> dict:
        d = {"mode": self.mode.value, "output_dir": self.output_dir,
             "model": self.model.as_dict()}
        if self.mode.is_pde:
            d["pde"] = {k: getattr(self.pde, k) for k in (f.name for f in fields(PdeRunOptions))}
            d["pde"]["snapshot_times"] = list(self.pde.snapshot_times)
            d["grid"] = self.grid.as_dict()
        elif self.mode is not Mode.CHECK_CONDITION:
            d["integrator"] = {f.name: getattr(self.integrator, f.name) for f in fields(IntegratorConfig)}
        if self.initial is not None:
            d["initial"] = self.initial.as_dict()
        return d


def _line_of(err: Exception) -> int | None:
    m = re.search(r"line (\d+)", str(err))
    return int(m.group(1)) if m else None


def parse_config(text: str, mode: Mode | str | None = None, source: str = "<config>") -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        line = _line_of(e)
        raise ConfigError(f"{source}: parse error at line {line}: {e}", line=line) from None
    return build_config(raw, mode, source)


def load_config(path, mode: Mode | str | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from None
    return parse_config(text, mode, source=str(path))


def _number(value, name, problems, positive=True):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"{name}: expected a number, got {value!r}")
        return None
    if positive and not value > 0:
        problems.append(f"{name}: must be positive, got {value!r}")
        return None
    return float(value)


def build_config(raw: dict, mode: Mode | str | None = None, source: str = "<config>") -> RunConfig:
    problems: list[str] = []
    file_mode = raw.get("mode")
    if mode is None and file_mode is None:
        raise ConfigError(f"{source}: no mode given (set `mode` or use a subcommand)")
    try:
        mode = Mode(mode if mode is not None else file_mode)
    except ValueError:
        raise ConfigError(f"{source}: unknown mode {mode or file_mode!r}") from None
    if file_mode is not None and file_mode != mode.value:
        problems.append(f"mode: file says {file_mode!r} but {mode.value!r} was requested")

    required, optional = _SECTIONS[mode]
    for key in raw:
        if key in _TOP_KEYS:
            continue
        if key not in required | optional:
            problems.append(f"[{key}]: not allowed for {mode.value}")
    for key in sorted(required):
        if key not in raw:
            problems.append(f"[{key}]: missing section")
    output_dir = raw.get("output_dir", ".")
    if not isinstance(output_dir, str):
        problems.append("output_dir: expected a string")

    model = _build_model(raw.get("model", {}), problems) if "model" in raw else None
    integrator = IntegratorConfig()
    pde_opts = grid = initial = None
    sect = raw.get("integrator", {})
    if mode.is_pde:
        pde_opts = _build_pde_options(sect, problems)
        grid = _build_grid(raw.get("grid", {}), mode, problems)
    elif mode is not Mode.CHECK_CONDITION:
        integrator = _build_integrator(sect, problems)
    if "initial" in raw:
        initial = _build_initial(raw["initial"], mode, problems)
    elif mode is Mode.ORACLE_COMPARE:
        initial = InitialSpec(kind="oracle")

    if problems:
        raise ConfigError([f"{source}: {p}" for p in problems])
    return RunConfig(model=model, mode=mode, integrator=integrator, pde=pde_opts, grid=grid,
                     initial=initial, output_dir=output_dir)


def _check_keys(section: dict, allowed: set, name: str, problems: list) -> None:
    if not isinstance(section, dict):
        problems.append(f"[{name}]: expected a table")
        return
    for key in section:
        if key not in allowed:
            problems.append(f"[{name}].{key}: unknown key")


def _build_model(section, problems):
    _check_keys(section, set(PARAM_NAMES), "model", problems)
    values = {}
    for name in PARAM_NAMES:
        if name not in section:
            problems.append(f"[model].{name}: missing")
            continue
        value = section[name]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"[model].{name}: expected a number, got {value!r}")
            continue
        values[name] = value
    if len(values) != len(PARAM_NAMES):
        for name, value in values.items():
            if not value > 0:
                problems.append(f"[model].{name}: must be positive, got {value!r}")
        return None
    try:
        return ModelParams(**values)
    except ParameterError as e:
        problems.extend(f"[model].{k}: {msg}" for k, msg in e.problems.items())
        return None


def _build_integrator(section, problems):
    _check_keys(section, _ODE_INTEGRATOR_KEYS, "integrator", problems)
    kwargs = {}
    for key in _ODE_INTEGRATOR_KEYS & set(section):
        value = _number(section[key], f"[integrator].{key}", problems)
        if value is not None:
            kwargs[key] = value
    try:
        return IntegratorConfig(**kwargs)
    except ValueError as e:
        problems.append(f"[integrator]: {e}")
        return None


def _build_pde_options(section, problems):
    _check_keys(section, _PDE_RUN_KEYS, "integrator", problems)
    kwargs = dict(section)
    if "snapshot_times" in kwargs:
        st = kwargs["snapshot_times"]
        if not isinstance(st, list) or not all(isinstance(x, (int, float)) and x >= 0 for x in st):
            problems.append("[integrator].snapshot_times: expected a list of nonnegative numbers")
            return None
        kwargs["snapshot_times"] = tuple(float(x) for x in st)
    try:
        return PdeRunOptions(**{k: v for k, v in kwargs.items() if k in _PDE_RUN_KEYS})
    except (TypeError, ValueError) as e:
        problems.append(f"[integrator]: {e}")
        return None


def _build_grid(section, mode, problems):
    _check_keys(section, _GRID_KEYS, "grid", problems)
    dim = 1 if mode is Mode.PDE1D else 2
    kwargs = {k: v for k, v in section.items() if k in _GRID_KEYS}
    if dim == 1 and ("ny" in kwargs or "dy" in kwargs or "Ly" in kwargs):
        problems.append("[grid]: ny/dy/Ly are not used in 1D")
        return None
    if "nx" in kwargs and "dx" in kwargs:
        problems.append("[grid]: give nx or dx, not both")
        return None
    try:
        if "nx" in kwargs or "ny" in kwargs:
            return GridSpec(dim=dim, **kwargs)
        dx = kwargs.pop("dx", 0.01)
        return GridSpec.from_spacing(dim=dim, dx=dx, **kwargs)
    except CFLViolation as e:
        problems.append(f"[grid]: {e}")
    except (TypeError, ValueError) as e:
        problems.append(f"[grid]: {e}")
    return None


def _build_initial(section, mode, problems):
    if not isinstance(section, dict):
        problems.append("[initial]: expected a table")
        return None
    kind = section.get("kind", "oracle" if mode is Mode.ORACLE_COMPARE else "uniform")
    if kind not in _INITIAL_KEYS:
        problems.append(f"[initial].kind: unknown kind {kind!r}")
        return None
    if mode is Mode.ORACLE_COMPARE and kind != "oracle":
        problems.append("[initial].kind: oracle-compare always uses kind = 'oracle'")
        return None
    if kind in ("gaussian", "cosine") and not mode.is_pde:
        problems.append(f"[initial].kind: {kind!r} needs a PDE mode")
        return None
    _check_keys(section, _INITIAL_KEYS[kind], "initial", problems)
    if kind == "uniform":
        vals = {}
        for s in ("u", "v", "r"):
            if s not in section:
                problems.append(f"[initial].{s}: missing")
                continue
            x = _number(section[s], f"[initial].{s}", problems, positive=False)
            if x is not None and x < 0:
                problems.append(f"[initial].{s}: must be nonnegative")
            elif x is not None:
                vals[s] = x
        if len(vals) < 3:
            return None
        spec = InitialSpec(kind="uniform", **vals)
        if mode.is_pde:
            spec = InitialSpec(kind="uniform", **vals, fields=InitialData.uniform(**vals))
        return spec
    if kind == "oracle":
        u = _number(section.get("u", 1.0), "[initial].u", problems, positive=False)
        safety = _number(section.get("safety", 1.0), "[initial].safety", problems)
        if safety is not None and safety < 1:
            problems.append("[initial].safety: must be >= 1")
        if u is None or safety is None:
            return None
        return InitialSpec(kind="oracle", u=u, safety=safety)
    kwargs = {k: v for k, v in section.items() if k != "kind"}
    if "center" in kwargs:
        kwargs["center"] = tuple(tuple(c) if isinstance(c, list) else c for c in kwargs["center"])
    try:
        return InitialSpec(kind=kind, fields=InitialData(kind=kind, **kwargs))
    except (TypeError, ValueError) as e:
        problems.append(f"[initial]: {e}")
        return None
