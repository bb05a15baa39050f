from __future__ import annotations

import cmath
import functools
import math
import random

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from isomono.connection import Bundle, Connection, Pole, assemble_normal_form, random_instance, to_E1
from isomono.errors import FlowSingular, IntegrationFailure, NoSolution, NotADeformationDirection
from isomono.exactalg import Mat2, Poly, RatFunc, Rational
from isomono.isoflow import (
    DeformationDirection,
    FloatState,
    Loop,
    admissible_directions,
    delta_omega,
    eta_parametric,
    flow,
    initial_state,
    monodromy_trace,
    omega1_variation,
    solve_upsilon,
    state_instance,
    trace_residue_sum,
    upsilon_residual,
    vector_field,
)

from conftest import R, U, make_instance, rationals

F = Rational
x = Poly.x()
ZERO = RatFunc(Poly())


def _e1(inst):
    return to_E1(assemble_normal_form(inst.sing, inst.darboux))


# ---------------------------------------------------------------------------
# directions


@pytest.mark.parametrize(
    "text, kind, label, index, sign",
    [
        ("theta_un:inf:0:+", "theta_un", "inf", 0, "+"),
        ("theta_un:2:1:-", "theta_un", "t2", 1, "-"),
        ("theta_ra:t3:1", "theta_ra", "t3", 1, "+"),
        ("t:3", "position", "t3", 0, "+"),
    ],
)
def test_direction_parse(text, kind, label, index, sign):
    d = DeformationDirection.parse(text)
    assert (d.kind, d.label, d.index, d.sign) == (kind, label, index, sign)
    assert DeformationDirection.parse(str(d)) == d


@pytest.mark.parametrize("text", ["theta_un:1:0", "theta_ra:1:x", "t", "s:1", "theta_un:1:0:*"])
def test_direction_parse_rejects(text):
    with pytest.raises(NotADeformationDirection):
        DeformationDirection.parse(text)


@pytest.mark.parametrize("text", ["t:1", "t:2", "t:inf", "theta_un:inf:1:+", "theta_ra:inf:0", "t:t9"])
def test_direction_check_rejects_frozen(text):
    inst = make_instance(100, 0)
    with pytest.raises(NotADeformationDirection):
        DeformationDirection.parse(text).check(inst)


def test_admissible_directions_all_check(instance):
    for d in admissible_directions(instance):
        d.check(instance)


# ---------------------------------------------------------------------------
# exact vector field


def test_velocity_matches_finite_differences():
    inst = make_instance(102, 2)
    par = eta_parametric(inst)
    h = F(1, 10**5)
    for d in admissible_directions(inst)[:3]:
        v = vector_field(inst, d)
        for j in range(len(inst.darboux)):
            for name, exact, sign in ((f"eta{j + 1}", v.dq[j], -1), (f"q{j + 1}", v.deta[j], 1)):
                up, down = dict(par.params), dict(par.params)
                up[name] += h
                down[name] -= h
                fd = (d.hamiltonian(par.build(up)) - d.hamiltonian(par.build(down))) / (2 * h)
                assert abs(float(sign * fd - exact)) <= 1e-6 * max(1.0, abs(float(exact)))


def test_velocity_weights_include_unit_drift():
    inst = make_instance(100, 0)
    d = DeformationDirection.parse("t:3")
    w = vector_field(inst, d).weights()
    assert w["t:t3"] == 1
    m = len(inst.darboux)
    assert set(w) == {"t:t3"} | {f"q{j + 1}" for j in range(m)} | {f"eta{j + 1}" for j in range(m)}


def test_variation_has_no_total_residue(instance):
    conn = _e1(instance)
    poles = [p.position for p in conn.poles]
    for d in admissible_directions(instance):
        assert trace_residue_sum(delta_omega(instance, d), poles) == 0


def test_trace_residue_sum_example():
    m = Mat2(RatFunc(Poly.const(F(2)), x), ZERO, ZERO, RatFunc(Poly.const(F(3)), x - F(1)))
    # residues 2 at 0 and 3 at 1 cancel against -5 at infinity
    assert trace_residue_sum(m, [F(0)]) == -3
    assert trace_residue_sum(m, [F(0), F(1)]) == 0


# ---------------------------------------------------------------------------
# horizontal lift


@functools.cache
def _shape0_e1() -> Connection:
    return _e1(make_instance(100, 0))


@settings(max_examples=10)
@given(st.lists(rationals(9), min_size=12, max_size=12))
def test_upsilon_recovers_planted_solution(cs):
    conn = _shape0_e1()
    E = Poly.from_roots((p.position, p.multiplicity - 1) for p in conn.poles)
    top = E.degree + conn.sing.infinity.order - 1
    k = conn.twist
    bounds = (top, top - k, top + k, top)
    pos = 0
    entries = []
    for bd in bounds:
        width = max(bd + 1, 0)
        coeffs = tuple((cs * 3)[pos : pos + width])
        pos += width
        entries.append(RatFunc(Poly(coeffs), E))
    planted = Mat2(*entries)
    delta = upsilon_residual(conn, planted, Mat2(ZERO, ZERO, ZERO, ZERO))
    sol = solve_upsilon(conn, delta, retry=False)
    diff = sol.upsilon - planted
    # the lift is unique up to a constant scalar
    assert diff.b.is_zero() and diff.c.is_zero()
    assert diff.a == diff.d and diff.a.is_poly() and diff.a.num.degree <= 0


def test_upsilon_certificate_for_every_direction(instance):
    conn = _e1(instance)
    for d in admissible_directions(instance):
        sol = solve_upsilon(conn, delta_omega(instance, d))
        assert sol.budget_extra == (1 if d.kind == "position" else 0)
        assert sol.nullspace_dim == 1
        r = upsilon_residual(conn, sol.upsilon, delta_omega(instance, d))
        assert all(e.is_zero() for e in (r.a, r.b, r.c, r.d))


@pytest.mark.parametrize("coordinate", ["eta1", "q1"])
def test_non_isomonodromic_variation_has_no_lift(coordinate):
    inst = make_instance(100, 0)
    conn = _e1(inst)
    delta = omega1_variation(eta_parametric(inst), {coordinate: 1})
    with pytest.raises(NoSolution) as info:
        solve_upsilon(conn, delta)
    assert info.value.residual is not None


# ---------------------------------------------------------------------------
# float flow


def test_flow_zero_steps_returns_initial_state():
    inst = make_instance(100, 0)
    states = flow(inst, DeformationDirection.parse("t:3"), 1e-3, 0)
    assert states == [initial_state(inst)]


def test_flow_with_vanishing_field_only_moves_time():
    inst = make_instance(100, 0)
    m = len(inst.darboux)
    states = flow(inst, DeformationDirection.parse("t:3"), 0.25, 4, velocity=lambda s: (np.zeros(m), np.zeros(m)))
    assert [s.s for s in states] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert all(s.q == states[0].q and s.eta == states[0].eta for s in states)


def test_rk4_is_fourth_order_on_linear_field():
    inst = make_instance(100, 0)
    d = DeformationDirection.parse("t:3")
    q0 = initial_state(inst).q[0]

    def field(s: FloatState):
        return np.array(s.q) * 0.5, np.array(s.eta) * -1.0

    errors = []
    for steps in (4, 8, 16):
        end = flow(inst, d, 0.5 / steps, steps, velocity=field)[-1]
        errors.append(abs(end.q[0] - q0 * math.exp(0.25)))
    rates = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    assert all(3.7 <= r <= 4.3 for r in rates)


def test_state_instance_is_exact_at_binary_rationals():
    inst = make_instance(100, 0)
    d = DeformationDirection.parse("t:3")
    st0 = initial_state(inst)
    moved = FloatState(tuple(q + 0.125 for q in st0.q), st0.eta, 0.5)
    out = state_instance(inst, d, moved)
    assert out.darboux[0].q == F(st0.q[0]) + F(1, 8)
    assert out.sing.point("t3").position == inst.sing.point("t3").position + F(1, 2)


def test_flow_refuses_to_approach_poles():
    inst = make_instance(100, 0)
    with pytest.raises(FlowSingular) as info:
        flow(inst, DeformationDirection.parse("t:3"), 1e-3, 3, margin=1e6)
    assert info.value.step == 0


def test_flow_rejects_frozen_direction():
    inst = make_instance(100, 0)
    with pytest.raises(NotADeformationDirection):
        flow(inst, DeformationDirection.parse("t:1"), 1e-3, 1)


@pytest.mark.slow
def test_short_flow_moves_position_and_apparent_point():
    inst = random_instance(random.Random(7), [(R, 1), (R, 1), (R, 1)], (U, 2))
    states = flow(inst, DeformationDirection.parse("t:3"), 1e-3, 2)
    assert states[-1].s == pytest.approx(2e-3)
    assert states[-1].q != states[0].q


# ---------------------------------------------------------------------------
# monodromy


def _diagonal_connection(a: Rational, b: Rational, c: Rational, d: Rational) -> Connection:
    """``diag(a/x + b/(x-1), c/x + d/(x-1)) dx``."""
    inst = make_instance(100, 0)
    num = Mat2(a * (x - F(1)) + b * x, Poly(), Poly(), c * (x - F(1)) + d * x)
    poles = (Pole("t1", F(0), 1), Pole("t2", F(1), 1))
    return Connection(Bundle.E1, num, poles, 0, inst.sing)


@pytest.mark.parametrize(
    "around, a_sum, c_sum",
    [((0j,), "a", "c"), ((1 + 0j,), "b", "d"), ((0j, 1 + 0j), "ab", "cd")],
)
def test_monodromy_of_diagonal_model(around, a_sum, c_sum):
    vals = {"a": F(1, 3), "b": F(-1, 5), "c": F(2, 7), "d": F(1, 4)}
    conn = _diagonal_connection(vals["a"], vals["b"], vals["c"], vals["d"])
    e1 = sum(float(vals[k]) for k in a_sum)
    e2 = sum(float(vals[k]) for k in c_sum)
    expected = cmath.exp(-2j * math.pi * e1) + cmath.exp(-2j * math.pi * e2)
    got = monodromy_trace(conn, Loop(0.5 + 1j, around, 0.3))
    assert abs(got - expected) < 1e-8


def test_contractible_loop_has_trivial_monodromy():
    conn = _e1(make_instance(100, 0))
    assert abs(monodromy_trace(conn, Loop(5 + 5j, (6 + 6j,), 0.5)) - 2) < 1e-8


@pytest.mark.parametrize(
    "loop",
    [Loop(0.5 + 1j, (0j,), 2.0), Loop(0.5 + 0j, (2 + 0j,), 0.3), Loop(-1 + 0j, (0.3 + 0j,), 0.3)],
    ids=["base-inside-circle", "segment-hits-pole", "circle-hits-pole"],
)
def test_monodromy_requires_clearance(loop):
    conn = _diagonal_connection(F(1, 3), F(-1, 5), F(2, 7), F(1, 4))
    with pytest.raises(IntegrationFailure):
        monodromy_trace(conn, loop, margin=1e-3)
