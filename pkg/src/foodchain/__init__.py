"""Finite-time blow-up in a modified Leslie-Gower food chain.

ODE and reaction-diffusion solvers, closed-form comparison functions and a
command-line driver.
"""
from .model import (
    ConditionReport,
    ModelParams,
    ParameterError,
    Region,
    State,
    check_condition,
    classify_region,
    eval_rhs,
)
from .ode import (
    BlowUpReport,
    IntegratorConfig,
    NoBlowUpEvidence,
    TerminalStatus,
    Trajectory,
    estimate_blowup_time,
    integrate,
    integrate_generic,
)
from .oracle import (
    OracleConfig,
    PsiTrace,
    blowup_oracle,
    check_domination,
    choose_blowup_data,
    choose_delta,
    exact_r1,
    exact_v1,
    psi_trace,
    v_threshold,
)
from .pde import BoundaryCondition, Field, GridSpec, InitialData, StopRule, laplacian, run, step

__version__ = "0.1.0"
