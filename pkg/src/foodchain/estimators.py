"""scikit-learn style wrappers.

The estimators hold model and solver settings as constructor parameters, so
``get_params``/``set_params``/``clone`` work and parameter sweeps can go
through the usual tooling. ``fit`` runs the condition check and the blow-up
construction; ``predict`` maps rows of initial data ``(u0, v0, r0)`` to
estimated blow-up times, ``inf`` where no blow-up was detected.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .model import ModelParams, check_condition
from .ode import IntegratorConfig, integrate
from .oracle import ConditionNotSatisfied, blowup_oracle, v_threshold
from .pde import GridSpec, InitialData, StopRule, run

_REF = ModelParams.reference().as_dict()


def check_initial_data(X) -> np.ndarray:
    """Validate a ``(n_samples, 3)`` array of nonnegative initial states."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 3:
        raise ValueError(f"expected 3 columns (u0, v0, r0), got {X.shape[1]}")
    if np.any(X < 0):
        raise ValueError("initial data must be nonnegative")
    return X


class _FoodChainBase(BaseEstimator):
    def __init__(self, a1=_REF["a1"], b1=_REF["b1"], w0=_REF["w0"], D0=_REF["D0"],
                 a2=_REF["a2"], w1=_REF["w1"], D1=_REF["D1"], w2=_REF["w2"],
                 D2=_REF["D2"], c=_REF["c"], w3=_REF["w3"], D3=_REF["D3"],
                 t_end=100.0, threshold=1e10, safety=1.0):
        self.a1, self.b1, self.w0, self.D0 = a1, b1, w0, D0
        self.a2, self.w1, self.D1, self.w2 = a2, w1, D1, w2
        self.D2, self.c, self.w3, self.D3 = D2, c, w3, D3
        self.t_end = t_end
        self.threshold = threshold
        self.safety = safety

    def _model_params(self) -> ModelParams:
        return ModelParams(**{k: getattr(self, k) for k in _REF})

    def fit(self, X=None, y=None):
        """Validate parameters and run the blow-up construction.

        ``X`` is accepted for pipeline compatibility and only validated.
        """
        if X is not None:
            check_initial_data(X)
        self.model_params_ = self._model_params()
        self.condition_ = check_condition(self.model_params_)
        self.oracle_ = None
        self.v_threshold_ = None
        if self.condition_.satisfied:
            self.oracle_ = blowup_oracle(self.model_params_, self.safety)
            self.v_threshold_ = v_threshold(self.model_params_, self.oracle_.k, self.oracle_.delta).value
        return self

    @property
    def blowup_data_(self) -> np.ndarray:
        """Oracle-selected ``(u0, v0, r0)`` with ``u0 = 1``."""
        check_is_fitted(self, "condition_")
        if self.oracle_ is None:
            raise ConditionNotSatisfied("condition not satisfied; no blow-up data constructed")
        return np.array([1.0, self.oracle_.v1_0, self.oracle_.r1_0])

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_params_")
        X = check_initial_data(X)
        return np.array([self._blowup_time(row) for row in X])

    def score(self, X, y) -> float:
        """Fraction of rows whose blow-up verdict (finite vs ``inf``) matches ``y``."""
        pred = np.isfinite(self.predict(X))
        return float(np.mean(pred == np.isfinite(np.asarray(y, dtype=float))))


class OdeBlowUpEstimator(_FoodChainBase):
    """Adaptive Runge-Kutta runs of the well-mixed food chain."""

    def __init__(self, a1=_REF["a1"], b1=_REF["b1"], w0=_REF["w0"], D0=_REF["D0"],
                 a2=_REF["a2"], w1=_REF["w1"], D1=_REF["D1"], w2=_REF["w2"],
                 D2=_REF["D2"], c=_REF["c"], w3=_REF["w3"], D3=_REF["D3"],
                 t_end=100.0, threshold=1e10, safety=1.0, rel_tol=1e-8, abs_tol=1e-10):
        super().__init__(a1, b1, w0, D0, a2, w1, D1, w2, D2, c, w3, D3, t_end, threshold, safety)
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol

    def _blowup_time(self, row) -> float:
        cfg = IntegratorConfig(rel_tol=self.rel_tol, abs_tol=self.abs_tol, t_end=self.t_end,
                               threshold=self.threshold, sample_stride=self.t_end)
        traj = integrate(self.model_params_, row, cfg)
        return traj.blowup.t_estimate if traj.blowup.detected else np.inf


class PdeBlowUpEstimator(_FoodChainBase):
    """Finite-difference runs started from spatially uniform data."""

    def __init__(self, a1=_REF["a1"], b1=_REF["b1"], w0=_REF["w0"], D0=_REF["D0"],
                 a2=_REF["a2"], w1=_REF["w1"], D1=_REF["D1"], w2=_REF["w2"],
                 D2=_REF["D2"], c=_REF["c"], w3=_REF["w3"], D3=_REF["D3"],
                 t_end=100.0, threshold=1e10, safety=1.0, dim=1, nx=64, dt=0.01,
                 bc="neumann", diffusion=1e-3, scheme="euler", max_change=0.1):
        super().__init__(a1, b1, w0, D0, a2, w1, D1, w2, D2, c, w3, D3, t_end, threshold, safety)
        self.dim = dim
        self.nx = nx
        self.dt = dt
        self.bc = bc
        self.diffusion = diffusion
        self.scheme = scheme
        self.max_change = max_change

    def fit(self, X=None, y=None):
        super().fit(X, y)
        d = self.diffusion
        self.grid_ = GridSpec(dim=self.dim, nx=self.nx, ny=self.nx, dt=self.dt, bc=self.bc,
                              d1=d, d2=d, d3=d)
        return self

    def _blowup_time(self, row) -> float:
        stop = StopRule(t_end=self.t_end, threshold=self.threshold, sample_stride=self.t_end)
        res = run(self.model_params_, self.grid_, InitialData.uniform(*row), stop,
                  scheme=self.scheme, max_change=self.max_change)
        return res.report.t_estimate if res.report.detected else np.inf
