import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from foodchain.model import ModelParams, State, check_condition
from foodchain.ode import IntegratorConfig, Trajectory, integrate_generic
from foodchain.oracle import (
    ConditionNotSatisfied,
    DomainError,
    InconclusiveComparison,
    OracleConfig,
    check_domination,
    choose_blowup_data,
    choose_delta,
    choose_w4,
    comparison_curves,
    exact_r1,
    exact_v1,
    make_oracle_config,
    modified_system_rhs,
    psi_trace,
    sharp_v_threshold,
    v_threshold,
)

positive = st.floats(min_value=1e-2, max_value=1e2, allow_nan=False)
params_strategy = st.builds(ModelParams, *([positive] * 12))


@st.composite
def satisfied_params(draw):
    p = draw(params_strategy)
    return p.replace(c=draw(st.floats(0.05, 0.95)) * check_condition(p).rhs)


satisfied_params = satisfied_params()

# frozen from exact rational arithmetic on the reference parameters
DELTA = 341 / 6000
K = 44 / 45
V_THRESHOLD = 2380 / 121
SHARP_THRESHOLD = 8020 / 319
BLOWUP_DATA = (8020 / 319 * 32, 32.0)


class TestExactSolutions:
    def test_r1_examples(self):
        assert exact_r1(1.0, 1.0, 0.0) == 1.0
        assert exact_r1(1.0, 1.0, 0.9) == pytest.approx(10.0, rel=1e-14)

    @pytest.mark.parametrize("t", [5.0, 6.0, -0.1])
    def test_r1_domain(self, t):
        with pytest.raises(DomainError):
            exact_r1(2.0, 0.1, t)

    def test_v1_examples(self):
        assert exact_v1(7.0, 1.0, 1.0, 0.25, 0.5, 0.0) == 7.0
        assert exact_v1(10.0, 1.0, 1.0, 0.25, 0.5, 1.0) == pytest.approx(
            10 * math.exp(-1) * math.sqrt(0.5), rel=1e-14)
        assert exact_v1(10.0, 1.0, 1.0, 0.25, 0.5, 1.0) == pytest.approx(2.6013004751144445, rel=1e-12)

    def test_v1_linear_factor_when_rate_equals_delta(self):
        t = 0.3
        assert exact_v1(5.0, 2.0, 0.7, 0.4, 0.4, t) == pytest.approx(
            5.0 * math.exp(-0.7 * t) * (1 - 2.0 * 0.4 * t), rel=1e-14)

    def test_v1_domain(self):
        with pytest.raises(DomainError):
            exact_v1(1.0, 2.0, 1.0, 0.25, 0.1, 5.0)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.1, 10), st.floats(0.05, 2), st.floats(0.01, 0.8))
    def test_r1_solves_quadratic(self, r0, delta, frac):
        t = frac / (delta * r0)
        h = 1e-6 * t
        deriv = (exact_r1(r0, delta, t + h) - exact_r1(r0, delta, t - h)) / (2 * h)
        want = delta * exact_r1(r0, delta, t) ** 2
        assert abs(deriv - want) / want < 1e-6

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1, 100), st.floats(0.1, 10), st.floats(0.1, 2), st.floats(0.05, 1),
           st.floats(0.05, 1), st.floats(0.01, 0.8))
    def test_v1_solves_its_equation(self, v0, r0, a2, w2, delta, frac):
        t = frac / (delta * r0)
        h = 1e-6 * t
        v = lambda s: exact_v1(v0, r0, a2, w2, delta, s)
        deriv = (v(t + h) - v(t - h)) / (2 * h)
        want = -a2 * v(t) - w2 * v(t) * exact_r1(r0, delta, t)
        assert abs(deriv - want) / abs(want) < 1e-6

    def test_v1_matches_numerical_integration(self):
        # w2 = 0.25, a2 = 1 coupled to the exact r1
        v0, r0, delta = 10.0, 1.0, 0.5
        rhs = lambda t, y: np.array([-1.0 * y[0] - 0.25 * y[0] * y[1], delta * y[1] ** 2])
        cfg = IntegratorConfig(rel_tol=1e-11, abs_tol=1e-13, t_end=1.5, sample_stride=0.1)
        traj = integrate_generic(rhs, [v0, r0], cfg)
        want = exact_v1(v0, r0, 1.0, 0.25, delta, traj.times)
        np.testing.assert_allclose(traj.y[:, 0], want, rtol=1e-8)


class TestDelta:
    def test_reference_midpoint(self, ref):
        delta = choose_delta(ref, check_condition(ref))
        assert delta == pytest.approx(DELTA, rel=1e-15)
        assert delta == pytest.approx(0.056833, abs=1e-6)

    def test_unsatisfied_condition(self, ref):
        with pytest.raises(ConditionNotSatisfied):
            choose_delta(ref.replace(c=0.06))

    @settings(max_examples=300, deadline=None)
    @given(satisfied_params)
    def test_strictly_inside(self, p):
        rep = check_condition(p)
        delta = choose_delta(p, rep)
        assert rep.c < delta < rep.rhs


class TestThreshold:
    def test_reference_value(self, ref):
        thr = v_threshold(ref, K, DELTA)
        assert thr.value == pytest.approx(V_THRESHOLD, rel=1e-13)
        assert thr.value == pytest.approx(19.67, abs=5e-3)
        assert thr.interesting

    def test_small_delta_limit(self, ref):
        thr = v_threshold(ref, K, 1e-14)
        assert thr.value == pytest.approx(ref.D3 * (1 - K) / K, rel=1e-9)

    def test_zero_divisor(self, ref):
        with pytest.raises(ValueError):
            v_threshold(ref, K, 2 * ref.w3 * K / ref.D3)

    def test_uninteresting_flag(self, ref):
        # only reachable with k >= 1
        thr = v_threshold(ref, 1.2, 1e-6)
        assert thr.value <= 0 and not thr.interesting

    @settings(max_examples=200, deadline=None)
    @given(satisfied_params)
    def test_positive_for_valid_factor(self, p):
        rep = check_condition(p)
        thr = v_threshold(p, rep.k, choose_delta(p, rep))
        assert thr.value > 0 and thr.interesting

    def test_sharp_threshold(self, ref):
        assert sharp_v_threshold(ref, DELTA) == pytest.approx(SHARP_THRESHOLD, rel=1e-13)
        # the condition-derived threshold alone does not enforce the
        # w3/(v+D3) + delta/2 <= c requirement
        v = V_THRESHOLD + 1.0
        assert ref.w3 / (v + ref.D3) + DELTA / 2 > ref.c


class TestBlowupData:
    def test_reference_fixture(self, ref):
        oc = make_oracle_config(ref)
        v0, r0 = choose_blowup_data(ref, oc)
        assert (v0, r0) == pytest.approx(BLOWUP_DATA, rel=1e-13)
        # the previous doubling step would not do
        end = v0 / 2 * math.exp(-ref.a2 / (2 * oc.delta * r0 / 2)) * 0.5 ** (ref.w2 / oc.delta)
        assert end <= SHARP_THRESHOLD

    def test_endpoint_inequality(self, ref):
        oc = make_oracle_config(ref)
        v0, r0 = choose_blowup_data(ref, oc)
        end = v0 * math.exp(-ref.a2 / (2 * oc.delta * r0)) * 2 ** (-ref.w2 / oc.delta)
        assert end > SHARP_THRESHOLD

    def test_safety_factor_scales_requirement(self, ref):
        oc = make_oracle_config(ref)
        v0, r0 = choose_blowup_data(ref, oc, safety=4.0)
        end = v0 * math.exp(-ref.a2 / (2 * oc.delta * r0)) * 2 ** (-ref.w2 / oc.delta)
        assert end > 4.0 * SHARP_THRESHOLD

    def test_safety_below_one_rejected(self, ref):
        with pytest.raises(ValueError):
            choose_blowup_data(ref, make_oracle_config(ref), safety=0.5)

    def test_unreachable_data_is_an_error(self, ref):
        p = ref.replace(w2=40.0)
        with pytest.raises(RuntimeError, match="doublings"):
            choose_blowup_data(p, make_oracle_config(p))

    def test_no_threshold_when_c_below_half_delta(self, ref):
        p = ref.replace(c=0.01)
        with pytest.raises(ValueError, match="delta/2"):
            choose_blowup_data(p, make_oracle_config(p))

    def test_large_r0_limit(self, ref):
        oc = make_oracle_config(ref)
        # with r0 huge the exponential factor is ~1
        v0 = SHARP_THRESHOLD * 2 ** (ref.w2 / oc.delta) * 1.001
        end = v0 * math.exp(-ref.a2 / (2 * oc.delta * 1e12)) * 2 ** (-ref.w2 / oc.delta)
        assert end > SHARP_THRESHOLD

    def test_inequality_holds_along_window(self, ref, oracle_cfg):
        t = np.linspace(0.0, oracle_cfg.window, 2001)
        v1 = exact_v1(oracle_cfg.v1_0, oracle_cfg.r1_0, ref.a2, ref.w2, oracle_cfg.delta, t)
        assert np.all(ref.w3 / (v1 + ref.D3) + oracle_cfg.delta / 2 <= ref.c)
        assert np.all(np.diff(v1) < 0)

    @settings(max_examples=100, deadline=None)
    @given(satisfied_params)
    def test_inequality_holds_for_random_params(self, p):
        oc = make_oracle_config(p)
        # no threshold exists unless c > delta/2; 2^(w/delta) must be
        # reachable within the doubling cap
        assume(p.c > oc.delta / 2 and oc.loss_rate(p) / oc.delta < 150)
        v0, r0 = choose_blowup_data(p, oc)
        oc = oc.with_data(v0, r0)
        t = np.linspace(0.0, oc.window, 201)
        v1 = exact_v1(v0, r0, p.a2, oc.loss_rate(p), oc.delta, t)
        assert np.all(p.w3 / (v1 + p.D3) + oc.delta / 2 <= p.c * (1 + 1e-12))


class TestW4:
    def test_unused_when_D2_large(self, ref):
        assert choose_w4(ref) is None
        assert make_oracle_config(ref).loss_rate(ref) == ref.w2

    def test_dominates_when_D2_small(self, ref):
        p = ref.replace(D2=0.3)
        w4 = choose_w4(p)
        assert w4 * p.D2 >= p.w2
        v = np.linspace(0, 100, 1001)
        assert np.all(w4 * (v + p.D2) > p.w2)
        assert make_oracle_config(p).loss_rate(p) == w4

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            OracleConfig(delta=0.1, k=1.2)
        with pytest.raises(ValueError):
            OracleConfig(delta=-0.1, k=0.5)


def _fake_traj(times, v, r, u=None):
    times = np.asarray(times, dtype=float)
    u = np.ones_like(times) if u is None else u
    from foodchain.ode import BlowUpReport, TerminalStatus
    return Trajectory(times=times, y=np.column_stack([u, v, r]),
                      terminal_status=TerminalStatus.REACHED_T_END,
                      blowup=BlowUpReport(detected=False))


class TestDomination:
    def test_exact_curves_are_dominated(self, ref, oracle_cfg):
        t = np.linspace(0, oracle_cfg.window, 11)
        v1, r1 = comparison_curves(ref, oracle_cfg, t)
        assert check_domination(_fake_traj(t, v1, r1), oracle_cfg, ref)
        assert check_domination(_fake_traj(t, v1, r1), oracle_cfg, ref, tol=0.0)

    def test_reference_fixture(self, ref, oracle_cfg, blowup_traj):
        assert check_domination(blowup_traj, oracle_cfg, ref)

    def test_corrupted_trajectory_fails(self, ref, oracle_cfg, blowup_traj):
        bad = _fake_traj(blowup_traj.times, blowup_traj.v / 2, blowup_traj.r)
        assert not check_domination(bad, oracle_cfg, ref)

    def test_short_trajectory_inconclusive(self, ref, oracle_cfg):
        t = np.linspace(0, oracle_cfg.window / 2, 5)
        v1, r1 = comparison_curves(ref, oracle_cfg, t)
        with pytest.raises(InconclusiveComparison):
            check_domination(_fake_traj(t, v1, r1), oracle_cfg, ref)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.0, 1e-3), st.floats(0.0, 1e-3), st.floats(0, 1e-2))
    def test_monotone_in_tol(self, ref, oracle_cfg, dip, tol, extra):
        t = np.linspace(0, oracle_cfg.window, 11)
        v1, r1 = comparison_curves(ref, oracle_cfg, t)
        traj = _fake_traj(t, v1 * (1 - dip), r1 * (1 - dip))
        if check_domination(traj, oracle_cfg, ref, tol=tol):
            assert check_domination(traj, oracle_cfg, ref, tol=tol + extra)


class TestPsi:
    def test_constant_v_closed_form(self, ref):
        t = np.linspace(0, 5, 51)
        traj = _fake_traj(t, np.full_like(t, 40.0), np.ones_like(t))
        trace = psi_trace(traj, ref, 10.0)
        slope = ref.w3 / (40.0 + ref.D3) - ref.c
        assert slope == pytest.approx(-0.035, rel=1e-12)
        np.testing.assert_allclose(trace.psi_values, 0.1 + slope * t, rtol=0, atol=1e-15)
        assert trace.crossing_time == pytest.approx(0.1 / 0.035, rel=1e-12)
        assert trace.psi_values[0] == 0.1

    def test_no_crossing_when_slope_nonnegative(self, ref):
        t = np.linspace(0, 100, 101)
        traj = _fake_traj(t, np.full_like(t, 1.0), np.ones_like(t))
        trace = psi_trace(traj, ref, 3.0, extrapolate=True)
        assert trace.crossing_time is None
        assert np.all(np.diff(trace.psi_values) >= 0)

    def test_extrapolation(self, ref):
        t = np.linspace(0, 1, 11)
        traj = _fake_traj(t, np.full_like(t, 40.0), np.ones_like(t))
        plain = psi_trace(traj, ref, 10.0)
        ext = psi_trace(traj, ref, 10.0, extrapolate=True)
        assert plain.crossing_time is None
        assert ext.extrapolated
        assert ext.crossing_time == pytest.approx(0.1 / 0.035, rel=1e-12)

    def test_matches_reciprocal_of_r(self, ref, oracle_cfg, blowup_traj):
        trace = psi_trace(blowup_traj, ref, oracle_cfg.r1_0)
        assert trace.psi_values[0] == 1 / oracle_cfg.r1_0
        np.testing.assert_allclose(trace.psi_values, 1 / blowup_traj.r, atol=1e-6)


def test_modified_system_matches_closed_forms(ref, oracle_cfg):
    T = 1 / (oracle_cfg.delta * oracle_cfg.r1_0)
    cfg = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12, t_end=0.9 * T, sample_stride=0.9 * T / 50)
    traj = integrate_generic(modified_system_rhs(ref, oracle_cfg),
                             [1.0, oracle_cfg.v1_0, oracle_cfg.r1_0], cfg)
    r1 = exact_r1(oracle_cfg.r1_0, oracle_cfg.delta, traj.times)
    v1 = exact_v1(oracle_cfg.v1_0, oracle_cfg.r1_0, ref.a2, ref.w2, oracle_cfg.delta, traj.times)
    np.testing.assert_allclose(traj.y[:, 2], r1, rtol=1e-6)
    np.testing.assert_allclose(traj.y[:, 1], v1, rtol=1e-6)
