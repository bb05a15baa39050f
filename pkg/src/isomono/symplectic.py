"""Darboux/eta coordinates, Hamiltonians and the residue 2-forms.

Every variation is an exact jet derivative: an instance is rebuilt over
``Jet`` scalars along a tangent direction, and the whole chain (normal
form, local reductions, apparent solutions) runs unchanged on jets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping

from .connection import (
    Instance,
    Kind,
    SingularityData,
    DarbouxPoint,
    Connection,
    assemble_normal_form,
    build_CD,
    parametric_instance,
)
from .errors import BadIndex, KindMismatch, NotADeformationDirection, PoleCollision, UnknownDirection
from .exactalg import INF, ONE, ZERO, MatSeries, Rational, Series, deriv_of, jet_lift, value_of
from .localform import LocalReduction, apparent_solution, reduce_point

__all__ = [
    "EtaCoordinates",
    "eta_from_p",
    "p_from_eta",
    "hamiltonian_theta_unramified",
    "hamiltonian_t",
    "hamiltonian_theta_ramified",
    "hamiltonians",
    "TangentDirection",
    "coordinate_directions",
    "fiber_directions",
    "base_directions",
    "krichever_omega",
    "canonical_omega_hat",
    "omega_matrix",
    "OmegaEvaluator",
    "differentials",
    "check_direction",
]


# ---------------------------------------------------------------------------
# eta coordinates


@dataclass(frozen=True)
class EtaCoordinates:
    q: tuple[Any, ...]
    eta: tuple[Any, ...]


def _eta_shift(sing: SingularityData, q: Any) -> tuple[Any, Any]:
    """``(P(q), sum D_i(q)/(q - t_i)^n_i + D_inf(q))`` at one apparent point."""
    local = build_CD(sing)
    shift = local.D_inf(q)
    for pt in sing.finite:
        y = q - pt.position
        if not value_of(y):
            raise PoleCollision(f"apparent point {value_of(q)} lies on {pt.label}")
        shift = shift + local.D[pt.label](q) / y**pt.order
    return sing.P()(q), shift


def eta_from_p(sing: SingularityData, darboux: Iterable[DarbouxPoint]) -> EtaCoordinates:
    qs, etas = [], []
    for d in darboux:
        P_q, shift = _eta_shift(sing, d.q)
        qs.append(d.q)
        etas.append(d.p / P_q - shift)
    return EtaCoordinates(tuple(qs), tuple(etas))


def p_from_eta(sing: SingularityData, coords: EtaCoordinates) -> tuple[DarbouxPoint, ...]:
    out = []
    for q, eta in zip(coords.q, coords.eta):
        P_q, shift = _eta_shift(sing, q)
        out.append(DarbouxPoint(q, (eta + shift) * P_q))
    return tuple(out)


# ---------------------------------------------------------------------------
# Hamiltonians


def hamiltonian_theta_unramified(reduction: LocalReduction, l: int, sign: str = "+") -> Any:
    """``theta^sign_(2n-l-2) / (n-l-1)`` for ``0 <= l <= n-2``."""
    if reduction.kind is not Kind.UNRAMIFIED:
        raise KindMismatch(f"point {reduction.label} is not unramified")
    n = reduction.pole_order
    if not 0 <= l <= n - 2:
        raise BadIndex(f"l={l} outside 0..{n - 2}")
    idx = 2 * n - l - 2
    if idx > reduction.order:
        raise BadIndex(f"reduction at {reduction.label} stops before order {idx}")
    pair = reduction.theta[idx]
    return (pair[0] if sign == "+" else pair[1]) / (n - l - 1)


def hamiltonian_t(reduction: LocalReduction, sing: SingularityData | None = None) -> Any:
    """``sum_(l<n) theta+_l theta+_(2n-l-1) + theta-_l theta-_(2n-l-1)``."""
    if reduction.kind is Kind.RAMIFIED:
        raise NotADeformationDirection(f"ramified point {reduction.label} has a frozen position")
    if sing is not None and reduction.label not in sing.movable_labels():
        raise NotADeformationDirection(f"point {reduction.label} has a normalised position")
    n = reduction.pole_order
    if reduction.order < 2 * n - 1:
        raise BadIndex(f"reduction at {reduction.label} stops before order {2 * n - 1}")
    th = reduction.theta
    return sum(
        (th[l][0] * th[2 * n - l - 1][0] + th[l][1] * th[2 * n - l - 1][1] for l in range(n)),
        ZERO,
    )


def hamiltonian_theta_ramified(reduction: LocalReduction, l: int) -> Any:
    """``theta_(4(n-1)-l) / (2(n-1)-l)``, with a correction at ``l = 0``."""
    if reduction.kind is not Kind.RAMIFIED:
        raise KindMismatch(f"point {reduction.label} is not ramified")
    n = reduction.pole_order
    if not 0 <= l <= 2 * n - 3:
        raise BadIndex(f"l={l} outside 0..{2 * n - 3}")
    th = reduction.theta
    idx = 4 * (n - 1) - l
    if idx >= len(th):
        raise BadIndex(f"reduction at {reduction.label} stops before zeta order {idx}")
    H = th[idx] / (2 * (n - 1) - l)
    if l == 0:
        if not value_of(th[1]):
            raise KindMismatch(f"theta_1 vanishes at {reduction.label}")
        H = H - th[2 * n - 1] / (2 * th[1])
    return H


def _reductions(conn: Connection, order_extra: int = 0) -> dict[str, LocalReduction]:
    out = {}
    for pt in conn.sing.points:
        out[pt.label] = reduce_point(conn, pt.label, 2 * pt.order - 1 + order_extra)
    return out


def hamiltonians(inst: Instance) -> dict[str, dict[str, Any]]:
    """All Hamiltonians, keyed by the name of the conjugate coordinate."""
    conn = assemble_normal_form(inst.sing, inst.darboux).connection()
    reds = _reductions(conn)
    H_theta: dict[str, Any] = {}
    H_t: dict[str, Any] = {}
    for pt in inst.sing.points:
        red = reds[pt.label]
        if pt.kind is Kind.UNRAMIFIED:
            for l in range(pt.order - 1):
                H_theta[f"theta+:{pt.label}:{l}"] = hamiltonian_theta_unramified(red, l, "+")
                H_theta[f"theta-:{pt.label}:{l}"] = hamiltonian_theta_unramified(red, l, "-")
        elif pt.kind is Kind.RAMIFIED:
            for l in range(2 * pt.order - 2):
                H_theta[f"theta:{pt.label}:{l}"] = hamiltonian_theta_ramified(red, l)
        if pt.label in inst.sing.movable_labels():
            H_t[f"t:{pt.label}"] = hamiltonian_t(red, inst.sing)
    return {"H_theta": H_theta, "H_t": H_t}


# ---------------------------------------------------------------------------
# tangent directions


@dataclass(frozen=True)
class TangentDirection:
    """Rational combination of coordinate vectors ``d/d(name)``."""

    weights: tuple[tuple[str, Rational], ...]

    @classmethod
    def basis(cls, name: str) -> TangentDirection:
        return cls(((name, ONE),))

    @classmethod
    def of(cls, weights: Mapping[str, Any]) -> TangentDirection:
        return cls(tuple((k, Rational(v)) for k, v in weights.items() if v))

    def as_dict(self) -> dict[str, Rational]:
        return dict(self.weights)

    def weight(self, name: str) -> Rational:
        return self.as_dict().get(name, ZERO)

    def __str__(self) -> str:
        return " + ".join(f"{v}*d/d[{k}]" for k, v in self.weights) or "0"


def _frozen_reason(sing: SingularityData, name: str) -> str | None:
    if name.startswith("t:"):
        label = name[2:]
        if label not in sing.movable_labels():
            return f"position of {label} is frozen"
        return None
    if name.startswith("theta"):
        head, label, l = name.split(":")
        pt = sing.point(label)
        if head == "theta" and int(l) >= 2 * pt.order - 2:
            return f"{name} is the frozen residue part"
        if head in ("theta+", "theta-") and int(l) >= pt.order - 1:
            return f"{name} is the frozen residue part"
    return None


def check_direction(inst: Instance, direction: TangentDirection) -> None:
    params = parametric_instance(inst).params
    for name, _ in direction.weights:
        if name not in params:
            raise UnknownDirection(f"unknown coordinate {name}")
        reason = _frozen_reason(inst.sing, name)
        if reason:
            raise NotADeformationDirection(reason)


def fiber_directions(inst: Instance) -> list[str]:
    out = []
    for j in range(len(inst.darboux)):
        out += [f"q{j + 1}", f"p{j + 1}"]
    return out


def base_directions(inst: Instance) -> list[str]:
    out = []
    for pt in inst.sing.points:
        if pt.kind is Kind.UNRAMIFIED:
            for l in range(pt.order - 1):
                out += [f"theta+:{pt.label}:{l}", f"theta-:{pt.label}:{l}"]
        elif pt.kind is Kind.RAMIFIED:
            out += [f"theta:{pt.label}:{l}" for l in range(2 * pt.order - 2)]
    out += [f"t:{label}" for label in inst.sing.movable_labels()]
    return out


def coordinate_directions(inst: Instance) -> list[str]:
    return fiber_directions(inst) + base_directions(inst)


# ---------------------------------------------------------------------------
# Krichever residue pairing


@dataclass(frozen=True)
class _LocalVariation:
    """``delta Omega`` and ``delta psi psi^-1`` at one point, values only."""

    d_omega: MatSeries
    d_psi: MatSeries


def _moving_derivative(m: MatSeries, dt: Rational) -> MatSeries:
    """Variation at fixed ``x`` of a jet series in ``y = x - t(eps)``."""
    out = m.derivs()
    if dt:
        out = out - m.values().deriv().scale(dt)
    return out


def _diag_series(base: Any, var: str, plus: Series, minus: Series) -> MatSeries:
    return MatSeries.from_entries(base, var, (plus, Series.zero(plus.trunc), Series.zero(plus.trunc), minus))


def _unramified_lambda(red: LocalReduction, dt: Rational, trunc: int) -> tuple[Series, Series]:
    """``delta Lambda`` at fixed ``x`` for both diagonal entries."""
    N = red.pole_order
    out = []
    for side in (0, 1):
        coeffs: dict[int, Rational] = {}
        for l, pair in enumerate(red.theta):
            th = pair[side]
            e = l - N + 1
            if e != 0 and e <= trunc:
                coeffs[e] = coeffs.get(e, ZERO) + deriv_of(th) / e
            if dt and e - 1 <= trunc:
                coeffs[e - 1] = coeffs.get(e - 1, ZERO) - dt * value_of(th)
        start = min(coeffs) if coeffs else 0
        out.append(Series(start, tuple(coeffs.get(k, ZERO) for k in range(start, trunc + 1)), trunc))
    return out[0], out[1]


def _ramified_lambda(red: LocalReduction, trunc: int) -> MatSeries:
    """``M delta(Lambda) M^-1`` with ``M = [[1, 1], [zeta, -zeta]]``, written in ``y``."""
    N = red.pole_order
    even: dict[int, Rational] = {}
    odd_low: dict[int, Rational] = {}
    odd_high: dict[int, Rational] = {}
    for k, B in enumerate(red.reduced):
        e = k - N + 1
        if e != 0:
            even[e] = deriv_of(2 * B.a) / (2 * e)
        odd_low[e] = deriv_of(2 * B.b) / (2 * k - 2 * N + 3)
        odd_high[e + 1] = odd_low[e]

    def series(c: dict[int, Rational]) -> Series:
        start = min(c)
        return Series(start, tuple(c.get(k, ZERO) for k in range(start, trunc + 1)), trunc)

    ev = series(even)
    return MatSeries.from_entries(red.Xi.base_point, red.Xi.variable, (ev, series(odd_low), series(odd_high), ev))


def _point_variation(conn: Connection, label: str, order: int) -> _LocalVariation:
    pt = conn.sing.point(label)
    N = pt.order
    dt = ZERO if pt.is_infinite else deriv_of(pt.position)
    red = reduce_point(conn, label, 2 * N + order)
    om = conn.expand(label if not pt.is_infinite else INF, order + 1)
    d_omega = _moving_derivative(om, dt)
    g = red.gauge()
    g0 = g.values()
    g0_inv = g0.inverse()
    d_psi = _moving_derivative(g, dt) @ g0_inv
    trunc = order + 1
    if pt.kind is Kind.RAMIFIED:
        if dt:
            raise NotADeformationDirection(f"ramified point {label} cannot move")
        lam = _ramified_lambda(red, trunc)
    else:
        plus, minus = _unramified_lambda(red, dt, trunc)
        lam = _diag_series(g.base_point, g.variable, plus, minus)
    d_psi = d_psi - g0 @ lam @ g0_inv
    return _LocalVariation(d_omega.values(), d_psi)


def _apparent_variation(conn: Connection, j: int, order: int) -> _LocalVariation:
    label = f"q{j + 1}"
    dq = deriv_of(conn.darboux[j].q)
    sol = apparent_solution(conn, j, order + 2)
    om = conn.expand(label, order + 1)
    d_omega = _moving_derivative(om, dq)
    g = sol.gauge()
    g0 = g.values()
    g0_inv = g0.inverse()
    d_psi = _moving_derivative(g, dq) @ g0_inv
    if dq:
        trunc = order + 1
        zero = Series.zero(trunc)
        lam = MatSeries.from_entries(g.base_point, g.variable, (zero, zero, zero, Series.monomial(-dq, -1, trunc)))
        d_psi = d_psi + g0 @ lam @ g0_inv
    return _LocalVariation(d_omega.values(), d_psi)


def _variations(inst: Instance, direction: TangentDirection, order: int) -> dict[str, _LocalVariation]:
    lifted = jet_lift(parametric_instance(inst), direction.as_dict())
    conn = assemble_normal_form(lifted.sing, lifted.darboux).connection()
    out = {}
    for pt in lifted.sing.points:
        out[pt.label] = _point_variation(conn, pt.label, max(order, pt.order))
    for j in range(len(lifted.darboux)):
        out[f"q{j + 1}"] = _apparent_variation(conn, j, order)
    return out


def _pair(v1: Mapping[str, _LocalVariation], v2: Mapping[str, _LocalVariation], labels: Iterable[str]) -> Rational:
    total = ZERO
    for label in labels:
        a, b = v1[label], v2[label]
        form = (a.d_omega @ b.d_psi - a.d_psi @ b.d_omega).trace()
        total += form.residue()
    return total / 2


def _as_direction(d: TangentDirection | str) -> TangentDirection:
    return TangentDirection.basis(d) if isinstance(d, str) else d


def _is_vertical(d: TangentDirection) -> bool:
    return all(k[0] in "qp" and k[1:].isdigit() for k, _ in d.weights)


class OmegaEvaluator:
    """Both 2-forms at one instance, caching the per-direction jet passes."""

    def __init__(self, inst: Instance, order: int = 2) -> None:
        self.inst = inst
        self.order = order
        self._variations: dict[TangentDirection, dict[str, _LocalVariation]] = {}
        self._differentials: dict[TangentDirection, dict[str, Rational]] = {}

    def variations(self, d: TangentDirection) -> dict[str, _LocalVariation]:
        if d not in self._variations:
            check_direction(self.inst, d)
            self._variations[d] = _variations(self.inst, d, self.order)
        return self._variations[d]

    def differentials(self, d: TangentDirection) -> dict[str, Rational]:
        if d not in self._differentials:
            check_direction(self.inst, d)
            self._differentials[d] = differentials(self.inst, d)
        return self._differentials[d]

    def krichever(self, dir1: TangentDirection | str, dir2: TangentDirection | str, mode: str = "extended") -> Rational:
        d1, d2 = _as_direction(dir1), _as_direction(dir2)
        if mode not in ("fiber", "extended"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "fiber":
            for d in (d1, d2):
                if not _is_vertical(d):
                    raise NotADeformationDirection(f"{d} is not vertical")
        v1, v2 = self.variations(d1), self.variations(d2)
        return _pair(v1, v2, v1.keys())

    def canonical(self, dir1: TangentDirection | str, dir2: TangentDirection | str) -> Rational:
        d1, d2 = _as_direction(dir1), _as_direction(dir2)
        f1, f2 = self.differentials(d1), self.differentials(d2)
        total = ZERO
        for j in range(len(self.inst.darboux)):
            e, q = f"eta{j + 1}", f"q{j + 1}"
            total += f1[e] * f2[q] - f2[e] * f1[q]
        for name in base_directions(self.inst):
            h = f"H[{name}]"
            total += f1[h] * d2.weight(name) - f2[h] * d1.weight(name)
        return total


def krichever_omega(
    inst: Instance,
    dir1: TangentDirection | str,
    dir2: TangentDirection | str,
    mode: str = "extended",
    order: int = 2,
) -> Rational:
    """Residue pairing ``1/2 sum res Tr(dOmega ^ dpsi psi^-1)`` on two directions.

    ``mode="fiber"`` additionally requires both directions to be vertical,
    i.e. to leave every ``t`` and ``theta`` fixed.
    """
    return OmegaEvaluator(inst, order).krichever(dir1, dir2, mode)


# ---------------------------------------------------------------------------
# canonical form


def _canonical_functions(inst: Instance) -> dict[str, Any]:
    """``eta_j``, ``q_j`` and every Hamiltonian as named scalars."""
    out: dict[str, Any] = {}
    coords = eta_from_p(inst.sing, inst.darboux)
    for j, (q, eta) in enumerate(zip(coords.q, coords.eta)):
        out[f"q{j + 1}"] = q
        out[f"eta{j + 1}"] = eta
    H = hamiltonians(inst)
    for name, v in H["H_theta"].items():
        out[f"H[{name}]"] = v
    for name, v in H["H_t"].items():
        out[f"H[{name}]"] = v
    return out


def differentials(inst: Instance, direction: TangentDirection) -> dict[str, Rational]:
    """Exact derivative of every canonical function along ``direction``."""
    lifted = jet_lift(parametric_instance(inst), direction.as_dict())
    return {k: deriv_of(v) for k, v in _canonical_functions(lifted).items()}


def canonical_omega_hat(
    inst: Instance,
    dir1: TangentDirection | str,
    dir2: TangentDirection | str,
) -> Rational:
    """``sum d eta_j ^ dq_j + sum dH_theta ^ d theta + sum dH_t ^ dt`` on a pair."""
    return OmegaEvaluator(inst).canonical(dir1, dir2)


def omega_matrix(names: list[str], form: Callable[[str, str], Rational]) -> list[list[Rational]]:
    """Antisymmetric matrix of a 2-form on coordinate vectors."""
    m = [[ZERO] * len(names) for _ in names]
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            v = form(names[a], names[b])
            m[a][b], m[b][a] = v, -v
    return m
