"""Closed-form reference cases used by ``isomono reproduce`` and the acceptance suite.

Two configurations have Hamiltonians known in closed form:

* three unramified poles of order 2 at ``0``, ``1`` and infinity, where the
  second tail coefficients ``theta^{+-}_2`` are explicit in terms of the
  partial-fraction data of the normal form;
* a single ramified pole of order 5 at infinity, which reproduces Kimura's
  degenerate Garnier system ``H(9/2)`` with times ``t1``, ``t2``.
"""

from __future__ import annotations

from dataclasses import dataclass
import random
from typing import Any, Callable

from .connection import (
    DarbouxPoint,
    Instance,
    Kind,
    NormalForm,
    SingularityData,
    SingularPoint,
    assemble_normal_form,
    random_instance,
    random_rational,
)
from .exactalg import INF, Rational
from .localform import reduce_point, reduce_ramified, scalar_unit_free_entries
from .symplectic import TangentDirection, differentials, hamiltonians

__all__ = [
    "Comparison",
    "three_pole_instance",
    "three_pole_closed_forms",
    "three_pole_computed",
    "kimura_instance",
    "kimura_constants",
    "kimura_hamiltonians",
    "kimura_closed_forms",
    "kimura_compatibility",
    "kimura_reduced_entries",
    "reproduce",
]


@dataclass(frozen=True)
class Comparison:
    """One closed-form check: ``computed - expected`` must be the zero rational."""

    name: str
    sample: int
    computed: Rational
    expected: Rational

    @property
    def discrepancy(self) -> Rational:
        return self.computed - self.expected


# ---------------------------------------------------------------------------
# three unramified poles of order 2


def three_pole_instance(rng: random.Random, height: int = 50) -> Instance:
    U = Kind.UNRAMIFIED
    return random_instance(rng, [(U, 2), (U, 2)], (U, 2), height=height)


def three_pole_closed_forms(nf: NormalForm) -> dict[str, tuple[Rational, Rational]]:
    """``(theta+_2, theta-_2)`` at ``t1 = 0``, ``t2 = 1`` and infinity in closed form.

    Each value is a quadratic expression in the residue and first tail
    coefficients plus a linear combination of the coefficients of the
    local partial-fraction data ``C_i``, ``D_i`` and the polynomial part
    ``C_tilde``, divided by ``theta+_0 - theta-_0``.
    """
    a, b, c = nf.sing.points
    lc = nf.local
    C0, D0 = lc.C[a.label].shift(a.position), lc.D[a.label].shift(a.position)
    C1, D1 = lc.C[b.label].shift(b.position), lc.D[b.label].shift(b.position)
    Ct, Ci, Di = nf.C_tilde, lc.C_inf, lc.D_inf
    qs = [d.q for d in nf.darboux]
    ps = [d.p for d in nf.darboux]

    def swap(pt: SingularPoint, sign: int) -> tuple[tuple[Any, ...], tuple[Any, ...]]:
        return (pt.theta_plus, pt.theta_minus) if sign > 0 else (pt.theta_minus, pt.theta_plus)

    def quadratic(tp: tuple[Any, ...], tm: tuple[Any, ...], cross: int) -> Any:
        return tp[0] * tm[0] + tp[1] * tm[1] + cross * 2 * (tp[0] * tm[1] + tp[1] * tm[0])

    def at_zero(sign: int) -> Rational:
        tp, tm = swap(a, sign)
        v = quadratic(tp, tm, -1) + Ct.coeff(0) + (C1.coeff(0) - C1.coeff(1))
        v += (D1.coeff(0) - D1.coeff(1) + Di.coeff(0)) * tp[0]
        v -= sum(((p - tp[0]) / q for p, q in zip(ps, qs)), Rational(0))
        return v / (tp[0] - tm[0])

    def at_one(sign: int) -> Rational:
        tp, tm = swap(b, sign)
        v = quadratic(tp, tm, 1) + sum((Ct.coeff(k) for k in range(3)), Rational(0))
        v += C0.coeff(0) + C0.coeff(1) + Ci.coeff(0) + Ci.coeff(1)
        v += (D0.coeff(0) + D0.coeff(1) + Di.coeff(0)) * tp[0]
        v -= sum(((p - tp[0]) / (q - 1) for p, q in zip(ps, qs)), Rational(0))
        return v / (tp[0] - tm[0])

    def at_infinity(sign: int) -> Rational:
        tp, tm = swap(c, sign)
        v = quadratic(tp, tm, -1) + Ct.coeff(2)
        v += (sum(qs, Rational(0)) - D0.coeff(0) - D1.coeff(0) - D1.coeff(1)) * tp[0]
        return v / (tp[0] - tm[0])

    return {
        a.label: (at_zero(1), at_zero(-1)),
        b.label: (at_one(1), at_one(-1)),
        c.label: (at_infinity(1), at_infinity(-1)),
    }


def three_pole_computed(nf: NormalForm) -> dict[str, tuple[Rational, Rational]]:
    """``(theta+_2, theta-_2)`` read off the formal reductions."""
    conn = nf.connection()
    out = {}
    for pt in nf.sing.points:
        plus, minus = reduce_point(conn, pt.label).theta[2]
        out[pt.label] = (plus, minus)
    return out


# ---------------------------------------------------------------------------
# one ramified pole of order 5 at infinity


def kimura_instance(t1: Any, t2: Any, q1: Any, q2: Any, p1: Any, p2: Any) -> Instance:
    """Ramified order-5 pole at infinity with tail ``(0, 6, 0, 0, 0, 3 t1, 0, t2, -1/2)``."""
    zero = Rational(0)
    theta = (zero, Rational(6), zero, zero, zero, 3 * t1, zero, t2, Rational(-1, 2))
    inf = SingularPoint("inf", INF, 5, Kind.RAMIFIED, theta=theta)
    return Instance(SingularityData((inf,)), (DarbouxPoint(q1, p1), DarbouxPoint(q2, p2)))


def _kimura_times(inst: Instance) -> tuple[Rational, Rational]:
    theta = inst.sing.infinity.theta
    return theta[5] / 3, theta[7]


def kimura_constants(nf: NormalForm) -> tuple[Rational, Rational]:
    """``K1``, ``K2``: the accessory parameters fixed by the two apparent conditions."""
    return nf.C_tilde.coeff(0) / 3, nf.C_tilde.coeff(1) / 3


def kimura_hamiltonians(inst: Instance) -> tuple[Rational, Rational]:
    """``(H1, H2)``: the Hamiltonians of the ``theta_5`` and ``theta_7`` directions."""
    h = hamiltonians(inst)["H_theta"]
    return h["theta:inf:5"], h["theta:inf:7"]


def kimura_closed_forms(inst: Instance) -> tuple[Rational, Rational]:
    """``(K1/3 - t1 t2/6, K2 - 3 t1^2/4)``."""
    t1, t2 = _kimura_times(inst)
    K1, K2 = kimura_constants(assemble_normal_form(inst.sing, inst.darboux))
    return K1 / 3 - t1 * t2 / 6, K2 - 3 * t1 * t1 / 4


def kimura_compatibility(inst: Instance, eta_sign: int = -1) -> Rational:
    """``d(3H1)/dt2 - dH2/dt1 - {3H1, H2}`` with ``eta = eta_sign * p``.

    ``t1 = theta_5 / 3`` so ``d/dt1 = 3 d/dtheta_5``; the Poisson bracket is
    taken in ``(q_i, eta_i)``.  The identity holds for ``eta_sign = -1``.
    """
    H1, H2 = "H[theta:inf:5]", "H[theta:inf:7]"

    def d(name: str) -> dict[str, Rational]:
        return differentials(inst, TangentDirection.basis(name))

    d_t1 = {k: 3 * v for k, v in d("theta:inf:5").items()}
    d_t2 = d("theta:inf:7")
    dq = [d(f"q{i + 1}") for i in range(len(inst.darboux))]
    deta = [{k: eta_sign * v for k, v in d(f"p{i + 1}").items()} for i in range(len(inst.darboux))]
    bracket = sum(
        (3 * deta[i][H1] * dq[i][H2] - 3 * dq[i][H1] * deta[i][H2] for i in range(len(inst.darboux))),
        Rational(0),
    )
    return 3 * d_t2[H1] - d_t1[H2] - bracket


def kimura_reduced_entries(inst: Instance) -> dict[str, tuple[Rational, Rational]]:
    """Selected reduced coefficients at infinity, ``(computed, closed form)``.

    Uses the scalar-unit gauge for the free entries of the ramified
    reduction.  ``residue`` entries are the diagonal of the ``y^{-1}``
    coefficient in the double-cover chart.
    """
    nf = assemble_normal_form(inst.sing, inst.darboux)
    K1, K2 = kimura_constants(nf)
    t1, t2 = _kimura_times(inst)
    q1, q2 = (d.q for d in inst.darboux)
    red = reduce_ramified(nf.connection(), "inf", order=6, free=scalar_unit_free_entries)
    B = red.reduced
    return {
        "residue_11": (B[4].a, Rational(-1, 4)),
        "residue_22": (B[4].d, Rational(-3, 4)),
        "a1": (B[5].a, 1 + q1 / 2 + q2 / 2),
        "b3": (B[4].b, -3 * t1 * t1 / 8 + K2 / 2),
        "b4": (B[5].b, -t1 * t2 / 4 + K1 / 2),
    }


def _kimura_sample(rng: random.Random, height: int) -> Instance:
    while True:
        t1, t2, q1, q2, p1, p2 = (random_rational(rng, height) for _ in range(6))
        if q1 != q2:
            return kimura_instance(t1, t2, q1, q2, p1, p2)


# ---------------------------------------------------------------------------


def _three_pole_checks(rng: random.Random, samples: int, height: int) -> list[Comparison]:
    out = []
    for s in range(samples):
        inst = three_pole_instance(rng, height)
        nf = assemble_normal_form(inst.sing, inst.darboux)
        computed, expected = three_pole_computed(nf), three_pole_closed_forms(nf)
        for label in computed:
            for idx, sign in enumerate("+-"):
                out.append(Comparison(f"theta{sign}_2 at {label}", s, computed[label][idx], expected[label][idx]))
    return out


def _kimura_checks(rng: random.Random, samples: int, height: int) -> list[Comparison]:
    out = []
    for s in range(samples):
        inst = _kimura_sample(rng, height)
        (h1, h2), (e1, e2) = kimura_hamiltonians(inst), kimura_closed_forms(inst)
        out.append(Comparison("H1 = K1/3 - t1 t2/6", s, h1, e1))
        out.append(Comparison("H2 = K2 - 3 t1^2/4", s, h2, e2))
        out.append(Comparison("compatibility identity", s, kimura_compatibility(inst), Rational(0)))
        for name, (got, want) in kimura_reduced_entries(inst).items():
            out.append(Comparison(f"reduced {name}", s, got, want))
    return out


CASES: dict[str, Callable[[random.Random, int, int], list[Comparison]]] = {
    "three-pole": _three_pole_checks,
    "kimura": _kimura_checks,
}


def reproduce(case: str, seed: int = 0, samples: int = 10, height: int = 50) -> list[Comparison]:
    """Evaluate every closed-form check of ``case`` at seeded rational samples."""
    try:
        run = CASES[case]
    except KeyError:
        raise ValueError(f"unknown case {case!r}; expected one of {sorted(CASES)}") from None
    return run(random.Random(seed), samples, height)
