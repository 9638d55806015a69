"""Run food-chain simulations and blow-up checks from TOML configs.

Exit codes: 0 success (blow-up is a normal outcome), 1 error, 2 the
boundedness condition is not satisfied.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .config import ConfigError, Mode, RunConfig, load_config
from .model import check_condition
from .ode import integrate, integrate_generic, write_trajectory_csv
from .oracle import (
    ConditionNotSatisfied,
    InconclusiveComparison,
    OracleConfig,
    blowup_oracle,
    check_domination,
    comparison_curves,
    modified_system_rhs,
    psi_trace,
    write_psi_csv,
)
from .pde import BoundaryCondition, InitialData, StopRule, run, write_snapshots

EXIT_OK, EXIT_ERROR, EXIT_UNSATISFIED = 0, 1, 2


def _fmt(x) -> str:
    return format(x, ".17g")


class Manifest:
    """Collects run metadata; :meth:`write` is called exactly once, last."""

    def __init__(self, cfg: RunConfig, command: str):
        self._start = time.perf_counter()
        self.data = {
            "tool": "foodchain",
            "version": __version__,
            "command": command,
            "config": cfg.as_dict(),
            "condition": check_condition(cfg.model).as_dict(),
            "oracle": None,
            "terminal_status": None,
            "t_estimate": None,
            "outputs": [],
        }

    def write(self, out_dir: str) -> str:
        self.data["wall_time_s"] = time.perf_counter() - self._start
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    if args.out is not None:
        changes["output_dir"] = args.out
    t_end = getattr(args, "t_end", None)
    threshold = getattr(args, "threshold", None)
    if cfg.mode.is_pde:
        pde = cfg.pde
        if t_end is not None:
            pde = dataclasses.replace(pde, t_end=t_end)
        if threshold is not None:
            pde = dataclasses.replace(pde, threshold=threshold)
        changes["pde"] = pde
        bc = getattr(args, "bc", None)
        if bc is not None:
            changes["grid"] = dataclasses.replace(cfg.grid, bc=BoundaryCondition(bc))
    elif cfg.mode is not Mode.CHECK_CONDITION:
        upd = {}
        if t_end is not None:
            upd["t_end"] = t_end
        if threshold is not None:
            upd["threshold"] = threshold
        if upd:
            changes["integrator"] = cfg.integrator.replace(**upd)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _initial_state(cfg: RunConfig, manifest: Manifest):
    spec = cfg.initial
    if spec.kind == "oracle":
        oc = blowup_oracle(cfg.model, spec.safety)
        manifest.data["oracle"] = oc.as_dict()
        return (spec.u, oc.v1_0, oc.r1_0), oc
    return (spec.u, spec.v, spec.r), None


def cmd_check_condition(cfg: RunConfig) -> int:
    rep = check_condition(cfg.model)
    print(f"k={_fmt(rep.k)} rhs={_fmt(rep.rhs)} c={_fmt(rep.c)} "
          f"satisfied={'true' if rep.satisfied else 'false'}")
    return EXIT_OK if rep.satisfied else EXIT_UNSATISFIED


def cmd_simulate_ode(cfg: RunConfig, manifest: Manifest) -> int:
    s0, _ = _initial_state(cfg, manifest)
    traj = integrate(cfg.model, s0, cfg.integrator)
    path = os.path.join(cfg.output_dir, "trajectory.csv")
    write_trajectory_csv(traj, path)
    manifest.data["outputs"].append(path)
    manifest.data["terminal_status"] = traj.terminal_status.value
    manifest.data["t_estimate"] = traj.blowup.t_estimate
    manifest.data["blowup"] = traj.blowup.as_dict()
    manifest.data["min_value"] = traj.min_value
    print(f"status={traj.terminal_status.value} t_end={_fmt(traj.times[-1])} "
          f"t_estimate={traj.blowup.t_estimate}")
    return EXIT_OK


def cmd_simulate_pde(cfg: RunConfig, manifest: Manifest) -> int:
    g, opts = cfg.grid, cfg.pde
    if cfg.initial.kind == "oracle":
        (u, v, r), _ = _initial_state(cfg, manifest)
        init = InitialData.uniform(u, v, r)
    else:
        init = cfg.initial.fields
    stop = StopRule(t_end=opts.t_end, threshold=opts.threshold, sample_stride=opts.sample_stride,
                    snapshot_times=opts.snapshot_times)
    res = run(cfg.model, g, init, stop, scheme=opts.scheme, max_change=opts.max_change)
    res.snapshots.update({(s, res.t_final): a for s, a in zip("uvr", res.fields)})
    norms_path = os.path.join(cfg.output_dir, "norms.csv")
    res.norms.write_csv(norms_path)
    manifest.data["outputs"].append(norms_path)
    manifest.data["outputs"].extend(write_snapshots(res, g, cfg.output_dir))
    manifest.data["terminal_status"] = res.status.value
    manifest.data["t_estimate"] = res.report.t_estimate
    manifest.data["blowup"] = res.report.as_dict()
    manifest.data["steps"] = res.steps
    manifest.data["clamped_nodes"] = res.clamped
    if res.message:
        manifest.data["message"] = res.message
    print(f"status={res.status.value} t_final={_fmt(res.t_final)} "
          f"t_estimate={res.report.t_estimate}")
    return EXIT_OK if res.status.value in ("ReachedTEnd", "BlowUpDetected") else EXIT_ERROR


def cmd_oracle_compare(cfg: RunConfig, manifest: Manifest) -> int:
    p = cfg.model
    (u0, v0, r0), oc = _initial_state(cfg, manifest)
    window = oc.window
    stride = window / 200
    icfg = cfg.integrator.replace(sample_stride=stride)
    full = integrate(p, (u0, v0, r0), icfg)
    t_mod_end = min(icfg.t_end, 1.0 / (oc.delta * oc.r1_0))
    mod = integrate_generic(modified_system_rhs(p, oc), [u0, v0, r0],
                            icfg.replace(t_end=t_mod_end), names=("u1", "v1", "r1"))
    try:
        verdict = check_domination(full, oc, p)
    except InconclusiveComparison as e:
        verdict = None
        manifest.data["domination_note"] = str(e)
    write_trajectory_csv(full, os.path.join(cfg.output_dir, "trajectory.csv"))
    path = os.path.join(cfg.output_dir, "comparison.csv")
    _write_comparison(path, full, mod, oc, p)
    manifest.data["outputs"] += [os.path.join(cfg.output_dir, "trajectory.csv"), path]
    manifest.data["terminal_status"] = full.terminal_status.value
    manifest.data["t_estimate"] = full.blowup.t_estimate
    manifest.data["domination"] = verdict
    manifest.data["comparison_window"] = window
    text = "inconclusive" if verdict is None else str(verdict).lower()
    print(f"domination={text} window={_fmt(window)} v0={_fmt(v0)} r0={_fmt(r0)} "
          f"t_estimate={full.blowup.t_estimate}")
    return EXIT_OK


def _write_comparison(path, full, mod, oc: OracleConfig, p) -> None:
    # r1_exact is the lower comparison curve (rate delta/2)
    limit = 1.0 / (oc.delta * oc.r1_0)
    u1_at = dict(zip(mod.times.tolist(), mod.y[:, 0].tolist()))
    with open(path, "w") as fh:
        fh.write("t,u,v,r,u1,v1_exact,r1_exact\n")
        for t, (u, v, r) in zip(full.times, full.y):
            if t >= limit or t not in u1_at:
                continue
            v1, r1 = comparison_curves(p, oc, t)
            fh.write(",".join(_fmt(x) for x in (t, u, v, r, u1_at[t], v1, r1)) + "\n")


def cmd_psi_trace(cfg: RunConfig, manifest: Manifest) -> int:
    s0, _ = _initial_state(cfg, manifest)
    if s0[2] <= 0:
        raise ValueError("psi-trace needs r > 0 initially")
    traj = integrate(cfg.model, s0, cfg.integrator)
    trace = psi_trace(traj, cfg.model, s0[2], extrapolate=traj.blowup.detected)
    path = os.path.join(cfg.output_dir, "psi.csv")
    write_psi_csv(trace, path)
    manifest.data["outputs"].append(path)
    manifest.data["terminal_status"] = traj.terminal_status.value
    manifest.data["t_estimate"] = traj.blowup.t_estimate
    manifest.data["psi_crossing"] = trace.crossing_time
    manifest.data["psi_crossing_extrapolated"] = trace.extrapolated
    print(f"crossing={trace.crossing_time} extrapolated={str(trace.extrapolated).lower()} "
          f"t_estimate={traj.blowup.t_estimate}")
    return EXIT_OK


_COMMANDS = {
    Mode.ODE: cmd_simulate_ode,
    Mode.PDE1D: cmd_simulate_pde,
    Mode.PDE2D: cmd_simulate_pde,
    Mode.ORACLE_COMPARE: cmd_oracle_compare,
    Mode.PSI_TRACE: cmd_psi_trace,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foodchain", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for mode in Mode:
        sp = sub.add_parser(mode.value)
        sp.add_argument("--config", required=True, help="TOML run configuration")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        if mode is Mode.CHECK_CONDITION:
            continue
        sp.add_argument("--t-end", type=float, dest="t_end", help="final time")
        sp.add_argument("--threshold", type=float, help="norm-escape threshold M")
        if mode.is_pde:
            sp.add_argument("--bc", choices=[b.value for b in BoundaryCondition], help="boundary condition")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    mode = Mode(args.command)
    try:
        cfg = _apply_overrides(load_config(args.config, mode), args)
        if mode is Mode.CHECK_CONDITION:
            return cmd_check_condition(cfg)
        os.makedirs(cfg.output_dir, exist_ok=True)
        manifest = Manifest(cfg, mode.value)
        code = _COMMANDS[mode](cfg, manifest)
        manifest.write(cfg.output_dir)
        return code
    except ConfigError as e:
        for problem in e.problems:
            print(f"error: {problem}", file=sys.stderr)
        return EXIT_ERROR
    except ConditionNotSatisfied as e:
        print(f"refused: {e}", file=sys.stderr)
        return EXIT_UNSATISFIED
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
