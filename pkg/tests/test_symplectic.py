from __future__ import annotations

from hypothesis import given, strategies as st
import pytest

from isomono.connection import Kind, assemble_normal_form
from isomono.errors import BadIndex, KindMismatch, NotADeformationDirection, UnknownDirection
from isomono.exactalg import Mat2, MatSeries, Rational, Series
from isomono.localform import ZERO_FREE, reduce_point, reduce_ramified, scalar_unit_free_entries
from isomono.symplectic import (
    EtaCoordinates,
    OmegaEvaluator,
    TangentDirection,
    base_directions,
    check_direction,
    coordinate_directions,
    eta_from_p,
    fiber_directions,
    hamiltonian_t,
    hamiltonian_theta_ramified,
    hamiltonian_theta_unramified,
    hamiltonians,
    omega_matrix,
    p_from_eta,
)

from conftest import SHAPES, make_instance, moved_fiber, rationals

F = Rational


def _conn(inst):
    return assemble_normal_form(inst.sing, inst.darboux).connection()


# ---------------------------------------------------------------------------
# eta coordinates


@given(st.integers(0, len(SHAPES) - 1), st.data())
def test_eta_round_trip(shape, data):
    inst = make_instance(7 + shape, shape)
    coords = eta_from_p(inst.sing, inst.darboux)
    m = len(coords.q)
    etas = data.draw(st.lists(rationals(20), min_size=m, max_size=m))
    moved = EtaCoordinates(coords.q, tuple(etas))
    back = eta_from_p(inst.sing, p_from_eta(inst.sing, moved))
    assert back == moved
    assert p_from_eta(inst.sing, coords) == inst.darboux


# ---------------------------------------------------------------------------
# Hamiltonians


def test_hamiltonian_names_match_base_directions(instance):
    H = hamiltonians(instance)
    names = set(H["H_theta"]) | set(H["H_t"])
    assert names == set(base_directions(instance))


def test_theta_hamiltonians_read_reduced_coefficients(instance):
    conn = _conn(instance)
    for pt in instance.sing.points:
        n = pt.order
        red = reduce_point(conn, pt.label, 2 * n - 1)
        if pt.kind is Kind.UNRAMIFIED:
            for l in range(n - 1):
                assert hamiltonian_theta_unramified(red, l, "+") == red.theta[2 * n - l - 2][0] / (n - l - 1)
                assert hamiltonian_theta_unramified(red, l, "-") == red.theta[2 * n - l - 2][1] / (n - l - 1)
        elif pt.kind is Kind.RAMIFIED:
            th = red.theta
            assert hamiltonian_theta_ramified(red, 0) == th[4 * n - 4] / (2 * n - 2) - th[2 * n - 1] / (2 * th[1])
            for l in range(1, 2 * n - 2):
                assert hamiltonian_theta_ramified(red, l) == th[4 * n - 4 - l] / (2 * n - 2 - l)


def test_position_hamiltonian_is_half_residue_of_trace_square(instance):
    conn = _conn(instance)
    for label in instance.sing.movable_labels():
        red = reduce_point(conn, label)
        n = red.pole_order
        R = MatSeries(label, "x-t", -n, tuple(red.reduced), red.order - n)
        sq = R @ R
        assert hamiltonian_t(red, instance.sing) == (sq[-1].a + sq[-1].d) / 2


def test_scalar_gauge_shifts_hamiltonians_by_constants():
    # the scalar gauge f = 1 + y + y^2 + y^3 adds d log f to both diagonal entries
    f = Series(0, (F(1),) * 4, 12)
    dlog = f.deriv() * f.inverse()
    for seed in (1, 2, 3):
        inst = make_instance(seed, 2)
        conn = _conn(inst)
        for pt in inst.sing.points:
            if pt.kind is not Kind.RAMIFIED:
                continue
            n = pt.order
            base = reduce_ramified(conn, pt.label, 2 * n - 1, free=ZERO_FREE)
            unit = reduce_ramified(conn, pt.label, 2 * n - 1, free=scalar_unit_free_entries)
            for l, (x, y) in enumerate(zip(unit.theta, base.theta)):
                e = l - 2 * n + 1
                shift = 2 * dlog[(e - 1) // 2] if l % 2 == 0 and e > 0 else F(0)
                assert x - y == shift
            for l in range(2 * n - 2):
                idx = 4 * n - 4 - l
                expected = 2 * dlog[(idx - 2 * n) // 2] / (2 * n - 2 - l) if l % 2 == 0 else F(0)
                assert hamiltonian_theta_ramified(unit, l) - hamiltonian_theta_ramified(base, l) == expected


def test_hamiltonian_index_errors():
    inst = make_instance(104, 4)
    conn = _conn(inst)
    unram = reduce_point(conn, "t1")
    ram = reduce_point(conn, "t2")
    with pytest.raises(BadIndex):
        hamiltonian_theta_unramified(unram, 1)
    with pytest.raises(BadIndex):
        hamiltonian_theta_ramified(ram, 2)
    with pytest.raises(KindMismatch):
        hamiltonian_theta_unramified(ram, 0)
    with pytest.raises(KindMismatch):
        hamiltonian_theta_ramified(unram, 0)
    with pytest.raises(NotADeformationDirection):
        hamiltonian_t(ram)
    with pytest.raises(NotADeformationDirection):
        hamiltonian_t(unram, inst.sing)


# ---------------------------------------------------------------------------
# directions


def test_direction_checks():
    inst = make_instance(102, 2)
    check_direction(inst, TangentDirection.basis("q1"))
    check_direction(inst, TangentDirection.of({"theta:t2:0": 1, "p1": F(1, 2)}))
    with pytest.raises(UnknownDirection):
        check_direction(inst, TangentDirection.basis("q9"))
    for frozen in ("theta:t2:2", "theta+:t3:1", "t:t1", "t:t2"):
        with pytest.raises(NotADeformationDirection):
            check_direction(inst, TangentDirection.basis(frozen))


def test_coordinate_count_is_even(instance):
    names = coordinate_directions(instance)
    assert len(fiber_directions(instance)) == 2 * len(instance.darboux)
    assert len(set(names)) == len(names)


# ---------------------------------------------------------------------------
# 2-forms


def test_fiber_pairing_is_inverse_p_polynomial(instance):
    ev = OmegaEvaluator(instance)
    P = instance.sing.P()
    for j, d in enumerate(instance.darboux):
        q, p = f"q{j + 1}", f"p{j + 1}"
        assert ev.krichever(p, q, "fiber") == 1 / P(d.q)
        assert ev.krichever(q, p, "fiber") == -1 / P(d.q)
        assert ev.krichever(q, q, "fiber") == 0


def test_fiber_pairing_separates_points(instance):
    ev = OmegaEvaluator(instance)
    m = len(instance.darboux)
    for j in range(m):
        for k in range(j + 1, m):
            for a in "qp":
                for b in "qp":
                    assert ev.krichever(f"{a}{j + 1}", f"{b}{k + 1}", "fiber") == 0


def test_fiber_mode_rejects_base_directions():
    inst = make_instance(105, 5)
    with pytest.raises(NotADeformationDirection):
        OmegaEvaluator(inst).krichever("q1", "t:t2", "fiber")


def test_canonical_form_on_eta_q_pairs(instance):
    ev = OmegaEvaluator(instance)
    P = instance.sing.P()
    for j, d in enumerate(instance.darboux):
        # eta = p / P(q) - shift(q), so d eta(d/dp) = 1/P(q)
        assert ev.canonical(f"p{j + 1}", f"q{j + 1}") == 1 / P(d.q)


def test_forms_agree_on_the_fiber(instance):
    ev = OmegaEvaluator(instance)
    names = fiber_directions(instance)
    assert omega_matrix(names, ev.krichever) == omega_matrix(names, ev.canonical)


def test_form_difference_on_mixed_pairs_vanishes():
    inst = make_instance(105, 5)
    ev = OmegaEvaluator(inst)
    for f in fiber_directions(inst):
        for b in base_directions(inst):
            assert ev.krichever(f, b) == ev.canonical(f, b)


def test_form_difference_is_pulled_back_from_the_base():
    inst = make_instance(102, 2)
    other = moved_fiber(inst, 3)
    ev, ev2 = OmegaEvaluator(inst), OmegaEvaluator(other)
    names = base_directions(inst)
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            d1 = ev.canonical(names[a], names[b]) - ev.krichever(names[a], names[b])
            d2 = ev2.canonical(names[a], names[b]) - ev2.krichever(names[a], names[b])
            assert d1 == d2


def test_forms_are_bilinear_and_antisymmetric():
    inst = make_instance(100, 0)
    ev = OmegaEvaluator(inst)
    combo = TangentDirection.of({"q1": F(2), "p1": F(-1, 3)})
    lhs = ev.krichever(combo, "t:t3")
    rhs = 2 * ev.krichever("q1", "t:t3") - ev.krichever("p1", "t:t3") / 3
    assert lhs == rhs
    assert ev.canonical(combo, "t:t3") == -ev.canonical("t:t3", combo)


def test_omega_matrix_is_antisymmetric():
    m = omega_matrix(["a", "b", "c"], lambda x, y: F(ord(x) * 10 + ord(y)))
    assert all(m[i][j] == -m[j][i] for i in range(3) for j in range(3))
    assert m[0][1] == F(ord("a") * 10 + ord("b"))


def test_hamiltonian_values_are_rational(instance):
    H = hamiltonians(instance)
    for group in H.values():
        assert all(isinstance(v, type(F(1))) for v in group.values())


def test_identity_framing_residue_at_regular_point(instance):
    conn = _conn(instance)
    for pt in instance.sing.points:
        if pt.kind is Kind.REGULAR:
            red = reduce_point(conn, pt.label)
            assert red.reduced[0] == Mat2.diag(pt.theta_plus[0], pt.theta_minus[0])
