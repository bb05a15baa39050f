from __future__ import annotations

import random

from hypothesis import given, settings, strategies as st
import pytest

from isomono.connection import Kind, NormalForm, Poly, assemble_normal_form, random_instance
from isomono.errors import KindMismatch, NotApparent
from isomono.exactalg import Mat2, MatSeries, Rational
from isomono.localform import (
    ZERO_FREE,
    apparent_solution,
    framing_from_jordan,
    framing_from_leading,
    framing_ramified,
    framing_unramified,
    gauge_transform,
    reduce_point,
    reduce_ramified,
    reduce_unramified,
    scalar_unit_free_entries,
)
from isomono.reference_cases import kimura_instance

from conftest import R, U, make_instance, rationals

F = Rational


def _conn(inst):
    return assemble_normal_form(inst.sing, inst.darboux).connection()


def _reduced_series(red) -> MatSeries:
    om_start = -red.pole_order
    return MatSeries(red.Xi.base_point, red.Xi.variable, om_start, red.reduced, red.order - red.pole_order)


def _check_gauge_identity(conn, red):
    """``(Phi Xi)^-1 d(Phi Xi) + (Phi Xi)^-1 Omega (Phi Xi)`` equals the reduced form through the order."""
    pt = conn.sing.point(red.label)
    om = conn.expand(red.label if not pt.is_infinite else "inf", red.order - red.pole_order)
    lhs = gauge_transform(om, red.gauge())
    rhs = _reduced_series(red)
    for k in range(-red.pole_order, red.order - red.pole_order + 1):
        assert lhs[k] == rhs[k], f"order {k}"


@pytest.fixture
def two_pole():
    return random_instance(random.Random(5), [(U, 2), (U, 2)], (U, 2))


@pytest.fixture
def kimura():
    return kimura_instance(F(2, 3), F(-1, 5), F(1, 3), F(-2, 7), F(4, 5), F(1, 9))


# ---------------------------------------------------------------------------
# unramified


def test_framing_at_zero(two_pole):
    pt = two_pole.sing.points[0]
    fr = framing_unramified(_conn(two_pole), "t1")
    assert fr.Phi == Mat2(F(1), 1 / pt.theta_minus[0], pt.theta_plus[0], F(1))


def test_framing_of_diagonal_leading_matrix():
    fr = framing_from_leading(Mat2.diag(F(2), F(5)), F(2), F(5))
    assert fr.Phi.b == 0 and fr.Phi.c == 0


@pytest.mark.parametrize(
    "L, plus, minus",
    [
        (Mat2(F(1), F(1), F(0), F(1)), F(1), F(1)),
        (Mat2.diag(F(2), F(5)), F(2), F(3)),
    ],
    ids=["equal-exponents", "wrong-eigenvalues"],
)
def test_framing_rejects_mismatched_leading_matrix(L, plus, minus):
    with pytest.raises(KindMismatch):
        framing_from_leading(L, plus, minus)


def test_first_correction_at_zero(two_pole):
    pt = two_pole.sing.points[0]
    (a0, a1), (b0, b1) = pt.theta_plus, pt.theta_minus
    xi1 = reduce_unramified(_conn(two_pole), "t1", 4).Xi[1]
    assert xi1.a == 0 and xi1.d == 0
    assert xi1.b == -(2 * b0 - b1) / ((a0 - b0) * b0)
    assert xi1.c == (2 * a0 - a1) * b0 / (a0 - b0)


def test_unramified_reduction_properties(instance):
    conn = _conn(instance)
    for pt in instance.sing.points:
        if pt.kind is Kind.RAMIFIED:
            continue
        red = reduce_unramified(conn, pt.label, 2 * pt.order + 1)
        for l in range(pt.order):
            assert red.theta[l] == (pt.theta_plus[l], pt.theta_minus[l])
        for s in range(1, red.order + 1):
            assert red.Xi[s].a == 0 and red.Xi[s].d == 0
        assert all(B.b == 0 and B.c == 0 for B in red.reduced)
        _check_gauge_identity(conn, red)


# ---------------------------------------------------------------------------
# ramified


def test_kimura_framing(kimura):
    assert framing_ramified(_conn(kimura), "inf").Phi == Mat2(F(1), F(0), F(0), F(-3))


def test_ramified_framing_reaches_jordan_form(instance):
    conn = _conn(instance)
    for pt in instance.sing.points:
        if pt.kind is not Kind.RAMIFIED:
            continue
        fr = framing_ramified(conn, pt.label)
        om = conn.expand(pt.label if not pt.is_infinite else "inf", -pt.order)
        lead = fr.Phi.inv() @ om[-pt.order] @ fr.Phi
        assert lead == Mat2(pt.theta[0] / 2, pt.theta[1] / 2, F(0), pt.theta[0] / 2)


def test_ramified_framing_rejects_semisimple():
    with pytest.raises(KindMismatch):
        framing_from_jordan(Mat2.diag(F(1), F(2)), F(3), F(1))


def test_kimura_reduced_residue_and_coefficients(kimura):
    nf = assemble_normal_form(kimura.sing, kimura.darboux)
    K1, K2 = nf.C_tilde.coeff(0) / 3, nf.C_tilde.coeff(1) / 3
    t1, t2 = F(2, 3), F(-1, 5)
    q1, q2 = F(1, 3), F(-2, 7)
    red = reduce_ramified(nf.connection(), "inf", order=6, free=scalar_unit_free_entries)
    B = red.reduced
    assert (B[4].a, B[4].d) == (F(-1, 4), F(-3, 4))
    assert B[5].a == 1 + q1 / 2 + q2 / 2
    assert B[4].b == -3 * t1**2 / 8 + K2 / 2
    assert B[5].b == -t1 * t2 / 4 + K1 / 2


def _double_cover_diagonal(red) -> MatSeries:
    """``M^-1 dM + M^-1 (Omega(zeta^2) 2 zeta) M`` with ``M = [[1, 1], [zeta, -zeta]]``."""
    N = red.pole_order
    K = red.order
    coeffs = {}
    for k, B in enumerate(red.reduced):
        coeffs[2 * (k - N) + 1] = B.scale(F(2))
    lo = 1 - 2 * N
    hi = 2 * (K - N) + 1
    om = MatSeries("zeta", "zeta", lo, tuple(coeffs.get(e, Mat2.zero()) for e in range(lo, hi + 1)), hi)
    half = F(1, 2)
    M = MatSeries("zeta", "zeta", 0, (Mat2(F(1), F(1), F(0), F(0)), Mat2(F(0), F(0), F(1), F(-1))), hi + 2)
    M_inv = MatSeries("zeta", "zeta", -1, (Mat2(F(0), half, F(0), -half), Mat2(half, F(0), half, F(0))), hi + 2)
    return M_inv @ M.deriv() + M_inv @ om @ M


def test_double_cover_diagonalisation(instance):
    conn = _conn(instance)
    for pt in instance.sing.points:
        if pt.kind is not Kind.RAMIFIED:
            continue
        red = reduce_ramified(conn, pt.label, 2 * pt.order + 1)
        diag = _double_cover_diagonal(red)
        N = pt.order
        known = [(l, th) for l, th in enumerate(red.theta) if l - 2 * N + 1 <= diag.truncation_order]
        assert len(known) > 2 * N
        for l, theta in known:
            m = diag[l - 2 * N + 1]
            assert m.b == 0 and m.c == 0
            assert m.a == theta
            assert m.d == (theta if l % 2 == 0 else -theta)


def test_ramified_reduction_properties(instance):
    conn = _conn(instance)
    for pt in instance.sing.points:
        if pt.kind is not Kind.RAMIFIED:
            continue
        N = pt.order
        red = reduce_ramified(conn, pt.label, 2 * N + 1)
        assert red.theta[: 2 * N - 1] == pt.theta
        for k, B in enumerate(red.reduced):
            shift = F(1, 2) if k == N - 1 else F(0)
            assert B.a - B.d == shift
            if k:
                assert B.c == red.reduced[k - 1].b
        _check_gauge_identity(conn, red)


@settings(max_examples=10)
@given(st.integers(0, 2), rationals(9), rationals(9), rationals(9), rationals(9))
def test_formal_invariants_ignore_free_entries(shape, a, b, c, d):
    # only exponents through the residue are invariants; later ones track the gauge choice
    inst = make_instance(40 + shape, [2, 3, 4][shape])
    conn = _conn(inst)

    def alternative(k):
        return a + b * k, c - d * k

    for pt in inst.sing.points:
        if pt.kind is not Kind.RAMIFIED:
            continue
        base = reduce_ramified(conn, pt.label, 2 * pt.order - 1, free=ZERO_FREE)
        other = reduce_ramified(conn, pt.label, 2 * pt.order - 1, free=alternative)
        assert base.theta[: 2 * pt.order] == other.theta[: 2 * pt.order]


def test_reduce_point_dispatches_on_kind(instance):
    conn = _conn(instance)
    for pt in instance.sing.points:
        red = reduce_point(conn, pt.label)
        assert red.kind is pt.kind
        assert red.order == 2 * pt.order - 1


# ---------------------------------------------------------------------------
# apparent points


def test_apparent_first_order(instance):
    nf = assemble_normal_form(instance.sing, instance.darboux)
    conn = nf.connection()
    lc = nf.local
    P = instance.sing.P()
    for j, dj in enumerate(instance.darboux):
        q, p = dj.q, dj.p
        xi1 = apparent_solution(conn, j, 3).Xi[1]
        assert xi1.c == 0
        assert xi1.a == -p / P(q)
        assert xi1.b == -1 / (2 * P(q))
        expected = p / P(q) - lc.D_inf(q)
        for pt in instance.sing.finite:
            expected -= lc.D[pt.label](q) / (q - pt.position) ** pt.order
        for k, dk in enumerate(instance.darboux):
            if k != j:
                expected += 1 / (q - dk.q)
        assert xi1.d == expected


def test_apparent_gauge_reaches_log_form(instance):
    conn = _conn(instance)
    for j in range(len(instance.darboux)):
        sol = apparent_solution(conn, j, 4)
        om = conn.expand(f"q{j + 1}", 3)
        out = gauge_transform(om, sol.gauge())
        assert out[-1] == Mat2.diag(F(0), F(-1))
        assert all(out[k].is_zero() for k in range(0, 4))


def test_non_apparent_point_is_detected():
    inst = random_instance(random.Random(21), [(R, 1), (R, 1), (R, 1)], (U, 2))
    nf = assemble_normal_form(inst.sing, inst.darboux)
    wrong = NormalForm(nf.sing, nf.darboux, nf.local, nf.C_tilde + Poly.const(F(1))).connection()
    with pytest.raises(NotApparent):
        apparent_solution(wrong, 0, 3)
