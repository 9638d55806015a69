from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foodchain.model import (
    PARAM_NAMES,
    ModelParams,
    ParameterError,
    Region,
    State,
    check_condition,
    classify_region,
    eval_rhs,
    reaction,
)

positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False)
density = st.floats(min_value=0.0, max_value=1e6, allow_nan=False, allow_infinity=False)
params_strategy = st.builds(ModelParams, *([positive] * 12))


def _exact_rhs(values, u, v, r):
    """Rational-arithmetic evaluation, independent of the float code path."""
    a1, b1, w0, D0, a2, w1, D1, w2, D2, c, w3, D3 = (Fraction(str(x)) for x in values)
    u, v, r = Fraction(u), Fraction(v), Fraction(r)
    return (a1 * u - b1 * u * u - w0 * u * v / (u + D0),
            -a2 * v + w1 * u * v / (u + D1) - w2 * v * r / (v + D2),
            c * r * r - w3 * r * r / (v + D3))


def test_reference_params_values():
    p = ModelParams.reference()
    assert (p.a1, p.b1, p.w0, p.D0) == (1.0, 0.5, 0.55, 10.0)
    assert (p.c, p.w3, p.D3) == (0.055, 1.2, 20.0)


def test_params_reject_nonpositive_and_report_all():
    values = ModelParams.reference().as_dict()
    values.update(b1=-0.5, D3=0.0)
    with pytest.raises(ParameterError) as exc:
        ModelParams(**values)
    assert set(exc.value.problems) == {"b1", "D3"}


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), "x"])
def test_params_reject_non_numbers(bad):
    values = ModelParams.reference().as_dict()
    values["c"] = bad
    with pytest.raises(ParameterError, match="c"):
        ModelParams(**values)


def test_state_rejects_negative():
    with pytest.raises(ValueError, match="v"):
        State(1.0, -1e-3, 0.0)


def test_eval_rhs_hand_example(ref):
    du, dv, dr = eval_rhs(ref, State(2, 3, 1))
    exact = _exact_rhs([getattr(ref, n) for n in PARAM_NAMES], 2, 3, 1)
    assert du == pytest.approx(-0.275, rel=1e-14)
    assert exact == (Fraction(-11, 40), Fraction(-3923, 1300), Fraction(13, 4600))
    for got, want in zip((du, dv, dr), exact):
        assert got == pytest.approx(float(want), rel=1e-14)


@pytest.mark.parametrize("v,r", [(0.0, 0.0), (3.0, 1.0), (1e4, 1e3)])
def test_zero_prey_has_zero_rate(ref, v, r):
    assert eval_rhs(ref, State(0.0, v, r))[0] == 0.0


@pytest.mark.parametrize("u,r", [(0.0, 0.0), (2.0, 5.0), (1e3, 1e4)])
def test_zero_middle_predator_has_zero_rate(ref, u, r):
    assert eval_rhs(ref, State(u, 0.0, r))[1] == 0.0


def test_reaction_vectorises(ref):
    u = np.array([0.0, 2.0, 5.0])
    v = np.array([1.0, 3.0, 0.0])
    r = np.array([4.0, 1.0, 2.0])
    du, dv, dr = reaction(ref, u, v, r)
    for i in range(3):
        assert (du[i], dv[i], dr[i]) == pytest.approx(eval_rhs(ref, State(u[i], v[i], r[i])))


@settings(max_examples=200, deadline=None)
@given(params_strategy, density, density, density)
def test_quasi_positivity(p, u, v, r):
    assert eval_rhs(p, State(0.0, v, r))[0] >= 0
    assert eval_rhs(p, State(u, 0.0, r))[1] >= 0
    assert eval_rhs(p, State(u, v, 0.0))[2] >= 0


def test_check_condition_reference(ref):
    rep = check_condition(ref)
    assert rep.k == pytest.approx(5.5 / 5.625, rel=1e-15)
    assert rep.k == pytest.approx(44 / 45, rel=1e-15)
    assert rep.rhs == pytest.approx(22 / 375, rel=1e-15)
    assert float(f"{rep.rhs:.3g}") == 0.0587
    assert rep.satisfied
    assert rep.margin == pytest.approx(22 / 375 - 0.055)


def test_check_condition_boundary_is_unsatisfied(ref):
    rhs = check_condition(ref).rhs
    rep = check_condition(ref.replace(c=rhs))
    assert rep.rhs == rhs
    assert not rep.satisfied


@settings(max_examples=200, deadline=None)
@given(params_strategy)
def test_condition_factor_properties(p):
    rep = check_condition(p)
    assert 0 < rep.k < 1
    assert rep.rhs == pytest.approx(rep.k * p.w3 / p.D3, rel=1e-15)
    assert rep.satisfied == (p.c < rep.rhs)


def test_classify_region_examples(ref):
    assert classify_region(ref, 40.0) is Region.RICH_DYNAMICS
    assert classify_region(ref, 0.0) is Region.BELOW_LOWER
    hot = ref.replace(c=0.07)
    for v in (0.0, 1.0, 40.0, 1e6):
        assert classify_region(hot, v) is Region.ABOVE_UPPER


def test_classify_region_ties_fall_outside(ref):
    # w3/(v+D3) == c at v = w3/c - D3
    v_tie = ref.w3 / ref.c - ref.D3
    assert ref.w3 / (v_tie + ref.D3) == ref.c
    assert classify_region(ref, v_tie) is Region.BELOW_LOWER
    assert classify_region(ref.replace(c=ref.w3 / ref.D3), 10.0) is Region.ABOVE_UPPER


def test_classify_region_rejects_negative_v(ref):
    with pytest.raises(ValueError):
        classify_region(ref, -1.0)


@given(params_strategy, density)
def test_classify_region_matches_inequalities(p, v):
    region = classify_region(p, v)
    inside = p.w3 / (v + p.D3) < p.c < p.w3 / p.D3
    assert (region is Region.RICH_DYNAMICS) == inside
