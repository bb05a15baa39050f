"""Isomonodromic vector fields, horizontal lifts and numerical flows.

Exact parts run on rationals and jets: the Hamiltonian velocity, the
variation of the ``O + O(1)`` connection along it and the linear system
for the horizontal lift ``Upsilon``.  Numerical parts (RK4 flow and
monodromy traces) evaluate the exact vector field at the binary rational
equal to each float state.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .connection import (
    Connection,
    Instance,
    Kind,
    assemble_normal_form,
    instance_from_parameters,
    instance_parameters,
    to_E1,
)
from .errors import FlowSingular, IntegrationFailure, NoSolution, NotADeformationDirection
from .exactalg import (
    INF,
    ONE,
    ZERO,
    Mat2,
    Parametric,
    Poly,
    RatFunc,
    Rational,
    deriv_of,
    jet_lift,
    residue_at,
    solve_linear,
    value_of,
)
from .localform import reduce_point
from .symplectic import (
    EtaCoordinates,
    eta_from_p,
    hamiltonian_t,
    hamiltonian_theta_ramified,
    hamiltonian_theta_unramified,
    p_from_eta,
)

__all__ = [
    "DeformationDirection",
    "admissible_directions",
    "eta_parametric",
    "Velocity",
    "vector_field",
    "omega1_variation",
    "delta_omega",
    "trace_residue_sum",
    "UpsilonSolution",
    "solve_upsilon",
    "upsilon_residual",
    "FloatState",
    "initial_state",
    "state_instance",
    "float_velocity",
    "flow",
    "Loop",
    "monodromy_trace",
]


# ---------------------------------------------------------------------------
# deformation directions


@dataclass(frozen=True)
class DeformationDirection:
    """An admissible isomonodromic time.

    ``kind`` is ``theta_un`` (with ``index`` l and ``sign``), ``theta_ra``
    (with ``index`` l') or ``position``.
    """

    kind: str
    label: str
    index: int = 0
    sign: str = "+"

    @property
    def coordinate(self) -> str:
        if self.kind == "theta_un":
            return f"theta{self.sign}:{self.label}:{self.index}"
        if self.kind == "theta_ra":
            return f"theta:{self.label}:{self.index}"
        return f"t:{self.label}"

    def __str__(self) -> str:
        if self.kind == "theta_un":
            return f"theta_un:{self.label}:{self.index}:{self.sign}"
        if self.kind == "theta_ra":
            return f"theta_ra:{self.label}:{self.index}"
        return f"t:{self.label}"

    @classmethod
    def parse(cls, text: str) -> DeformationDirection:
        """Parse ``theta_un:i:l:+``, ``theta_ra:i:l`` or ``t:i``.

        ``i`` is a point label (``t3``, ``inf``) or a 1-based finite index.
        """
        parts = text.split(":")

        def label(raw: str) -> str:
            return f"t{raw}" if raw.isdigit() else raw

        try:
            if parts[0] == "theta_un" and len(parts) == 4 and parts[3] in ("+", "-"):
                return cls("theta_un", label(parts[1]), int(parts[2]), parts[3])
            if parts[0] == "theta_ra" and len(parts) == 3:
                return cls("theta_ra", label(parts[1]), int(parts[2]))
            if parts[0] == "t" and len(parts) == 2:
                return cls("position", label(parts[1]))
        except ValueError:
            pass
        raise NotADeformationDirection(f"cannot parse direction {text!r}")

    def check(self, inst: Instance) -> None:
        try:
            pt = inst.sing.point(self.label)
        except KeyError:
            raise NotADeformationDirection(f"no point labelled {self.label}") from None
        if self.kind == "theta_un":
            ok = pt.kind is Kind.UNRAMIFIED and 0 <= self.index <= pt.order - 2
        elif self.kind == "theta_ra":
            ok = pt.kind is Kind.RAMIFIED and 0 <= self.index <= 2 * pt.order - 3
        elif self.kind == "position":
            ok = self.label in inst.sing.movable_labels()
        else:
            ok = False
        if not ok:
            raise NotADeformationDirection(f"{self} is not an admissible deformation of this instance")

    def hamiltonian(self, inst: Instance) -> Any:
        self.check(inst)
        conn = assemble_normal_form(inst.sing, inst.darboux).connection()
        red = reduce_point(conn, self.label)
        if self.kind == "theta_un":
            return hamiltonian_theta_unramified(red, self.index, self.sign)
        if self.kind == "theta_ra":
            return hamiltonian_theta_ramified(red, self.index)
        return hamiltonian_t(red, inst.sing)


def admissible_directions(inst: Instance) -> list[DeformationDirection]:
    out = []
    for pt in inst.sing.points:
        if pt.kind is Kind.UNRAMIFIED:
            for l in range(pt.order - 1):
                out += [DeformationDirection("theta_un", pt.label, l, "+"), DeformationDirection("theta_un", pt.label, l, "-")]
        elif pt.kind is Kind.RAMIFIED:
            out += [DeformationDirection("theta_ra", pt.label, l) for l in range(2 * pt.order - 2)]
    out += [DeformationDirection("position", label) for label in inst.sing.movable_labels()]
    return out


# ---------------------------------------------------------------------------
# Hamiltonian vector field in the (q, eta) chart


def eta_parametric(inst: Instance) -> Parametric:
    """The instance as a function of ``q_j``, ``eta_j`` and the base coordinates."""
    params = {k: v for k, v in instance_parameters(inst).items() if not (k[0] == "p" and k[1:].isdigit())}
    coords = eta_from_p(inst.sing, inst.darboux)
    m = len(inst.darboux)
    for j in range(m):
        params[f"eta{j + 1}"] = value_of(coords.eta[j])

    def build(values: Mapping[str, Any]) -> Instance:
        full = dict(values)
        for j in range(m):
            full[f"p{j + 1}"] = ZERO
        shell = instance_from_parameters(inst, full)
        qs = tuple(values[f"q{j + 1}"] for j in range(m))
        etas = tuple(values[f"eta{j + 1}"] for j in range(m))
        return Instance(shell.sing, p_from_eta(shell.sing, EtaCoordinates(qs, etas)))

    return Parametric(build, params)


@dataclass(frozen=True)
class Velocity:
    """``dq_j/ds = -dH/d eta_j`` and ``d eta_j/ds = dH/dq_j`` plus the unit drift."""

    direction: DeformationDirection
    dq: tuple[Rational, ...]
    deta: tuple[Rational, ...]

    def weights(self) -> dict[str, Rational]:
        w = {self.direction.coordinate: ONE}
        for j, (a, b) in enumerate(zip(self.dq, self.deta)):
            w[f"q{j + 1}"] = a
            w[f"eta{j + 1}"] = b
        return w


def vector_field(inst: Instance, direction: DeformationDirection) -> Velocity:
    """Exact Hamiltonian velocity at a rational state."""
    direction.check(inst)
    par = eta_parametric(inst)
    dq, deta = [], []
    for j in range(len(inst.darboux)):
        dH_deta = deriv_of(direction.hamiltonian(jet_lift(par, f"eta{j + 1}")))
        dH_dq = deriv_of(direction.hamiltonian(jet_lift(par, f"q{j + 1}")))
        dq.append(-dH_deta)
        deta.append(dH_dq)
    return Velocity(direction, tuple(dq), tuple(deta))


# ---------------------------------------------------------------------------
# variations of the O + O(1) connection


def _connection_variation(conn: Connection) -> Mat2:
    """``d/d eps`` of ``num/den`` for a connection built over jets."""
    den = conn.denominator()
    den0, den1 = den.map(value_of), den.map(deriv_of)
    entries = []
    for e in (conn.num.a, conn.num.b, conn.num.c, conn.num.d):
        n0, n1 = e.map(value_of), e.map(deriv_of)
        entries.append(RatFunc(n1 * den0 - n0 * den1, den0 * den0))
    return Mat2(*entries)


def omega1_variation(par: Parametric, weights: Mapping[str, Any]) -> Mat2:
    """Exact first variation of the ``O + O(1)`` connection matrix along ``weights``."""
    lifted = jet_lift(par, weights)
    return _connection_variation(to_E1(assemble_normal_form(lifted.sing, lifted.darboux)))


def delta_omega(inst: Instance, direction: DeformationDirection) -> Mat2:
    """``delta Omega^(1)`` along the isomonodromic vector field of ``direction``."""
    v = vector_field(inst, direction)
    return omega1_variation(eta_parametric(inst), v.weights())


def trace_residue_sum(m: Mat2, poles: Sequence[Any]) -> Rational:
    """Sum of residues of ``Tr m`` over ``poles`` and infinity."""
    tr = m.a + m.d
    total = residue_at(tr, INF)
    for t in poles:
        total += residue_at(tr, t)
    return total


# ---------------------------------------------------------------------------
# horizontal lift


@dataclass(frozen=True)
class UpsilonSolution:
    upsilon: Mat2
    budget_extra: int
    unknowns: int
    nullspace_dim: int


def upsilon_residual(conn: Connection, upsilon: Mat2, delta: Mat2) -> Mat2:
    """``dUpsilon + [Omega, Upsilon] - delta`` as exact rational functions."""
    om = Mat2(*(conn.entry(i, j) for i in range(2) for j in range(2)))
    d_ups = upsilon.map(lambda f: RatFunc.lift(f).deriv())
    return d_ups + (om @ upsilon - upsilon @ om) - delta


def _poly_identity_rows(terms: Sequence[Mat2], rhs: Mat2) -> tuple[list[list[Rational]], list[Rational], list[tuple[int, int]]]:
    """Coefficient equations ``sum c_k terms[k] = rhs`` for polynomial matrices."""
    width = 0
    for m in list(terms) + [rhs]:
        for e in (m.a, m.b, m.c, m.d):
            width = max(width, e.degree + 1)
    rows, b, where = [], [], []
    for idx in range(4):
        for k in range(width):
            row = [(t.a, t.b, t.c, t.d)[idx].coeff(k) for t in terms]
            r = (rhs.a, rhs.b, rhs.c, rhs.d)[idx].coeff(k)
            if any(row) or r:
                rows.append(row)
                b.append(r)
                where.append((idx, k))
    return rows, b, where


def _locate_failure(rows: list[list[Rational]], b: list[Rational], where: list[tuple[int, int]]) -> tuple[str, int]:
    """Lowest ``x``-degree at which the truncated system is already inconsistent."""
    degrees = sorted({k for _, k in where})
    lo, hi = 0, len(degrees) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        keep = [i for i, (_, k) in enumerate(where) if k <= degrees[mid]]
        try:
            solve_linear([rows[i] for i in keep], [b[i] for i in keep])
            lo = mid + 1
        except NoSolution:
            hi = mid
    bad = [w for w in where if w[1] == degrees[lo]]
    return ("11", "12", "21", "22")[bad[0][0]], degrees[lo]


def _solve_upsilon_once(conn: Connection, delta: Mat2, extra: int) -> UpsilonSolution:
    finite = [p for p in conn.poles]
    E = Poly.from_roots((p.position, p.multiplicity - 1 + extra) for p in finite)
    den = conn.denominator()
    n_inf = conn.sing.infinity.order
    k = conn.twist
    base = E.degree + n_inf - 1 + extra
    bounds = (base, base - k, base + k, base)
    # everything multiplied by E^2 den^2
    scale = E * E * den * den
    rhs_entries = []
    for e in (delta.a, delta.b, delta.c, delta.d):
        f = RatFunc.lift(e) * RatFunc(scale)
        if not f.is_poly():
            raise NoSolution("the variation has poles beyond the lift budget", residual=("pole", f.den.to_json()))
        rhs_entries.append(f.num)
    rhs = Mat2(*rhs_entries)
    num = conn.num
    dE = E.deriv()
    terms, layout = [], []
    for idx, bound in enumerate(bounds):
        for power in range(bound + 1):
            mono = Poly((ZERO,) * power + (ONE,))
            entries = [Poly()] * 4
            entries[idx] = mono
            U = Mat2(*entries)
            dU = U.map(lambda p: p.deriv())
            d_term = (dU.map(lambda p: p * E) - U.map(lambda p: p * dE)).map(lambda p: p * den * den)
            comm = (num @ U - U @ num).map(lambda p: p * E * den)
            terms.append(d_term + comm)
            layout.append((idx, power))
    rows, b, where = _poly_identity_rows(terms, rhs)
    try:
        sol = solve_linear(rows, b) if rows else None
    except NoSolution as exc:
        entry, degree = _locate_failure(rows, b, where)
        raise NoSolution(
            f"no horizontal lift within budget +{extra}: first inconsistency in entry {entry} at x^{degree}",
            residual=(entry, degree),
        ) from exc
    coeffs = [[ZERO] * (bd + 1) for bd in bounds]
    if sol is not None:
        for (idx, power), c in zip(layout, sol.solution):
            coeffs[idx][power] = c
    ups = Mat2(*(RatFunc(Poly(tuple(c)), E) for c in coeffs))
    if not all(e.is_zero() for e in (lambda r: (r.a, r.b, r.c, r.d))(upsilon_residual(conn, ups, delta))):
        raise NoSolution("lift residual does not vanish", residual="verification")
    return UpsilonSolution(ups, extra, len(layout), sol.nullspace_dim if sol is not None else 0)


def solve_upsilon(conn: Connection, delta: Mat2, retry: bool = True) -> UpsilonSolution:
    """Rational ``Upsilon`` with ``dUpsilon + [Omega, Upsilon] = delta``.

    The ansatz allows poles of order ``n_i - 1`` at each ``t_i`` and growth
    ``n_inf - 1`` at infinity in the ``O + O(1)`` frame; on failure the
    budgets are raised by one once.  Raises ``NoSolution`` otherwise.
    """
    try:
        return _solve_upsilon_once(conn, delta, 0)
    except NoSolution:
        if not retry:
            raise
    return _solve_upsilon_once(conn, delta, 1)


# ---------------------------------------------------------------------------
# float flow


@dataclass(frozen=True)
class FloatState:
    q: tuple[float, ...]
    eta: tuple[float, ...]
    s: float

    def to_json(self) -> dict[str, Any]:
        return {"s": self.s, "q": list(self.q), "eta": list(self.eta)}


def initial_state(inst: Instance) -> FloatState:
    coords = eta_from_p(inst.sing, inst.darboux)
    return FloatState(tuple(float(q) for q in coords.q), tuple(float(e) for e in coords.eta), 0.0)


def state_instance(template: Instance, direction: DeformationDirection, state: FloatState) -> Instance:
    """The exact instance at the binary rational equal to ``state``."""
    par = eta_parametric(template)
    values: dict[str, Any] = dict(par.params)
    values[direction.coordinate] = values[direction.coordinate] + Rational(state.s)
    for j, (q, e) in enumerate(zip(state.q, state.eta)):
        values[f"q{j + 1}"] = Rational(q)
        values[f"eta{j + 1}"] = Rational(e)
    return par.build(values)


def _check_margin(inst: Instance, margin: float, step: int) -> None:
    qs = [float(value_of(d.q)) for d in inst.darboux]
    ts = [float(value_of(p.position)) for p in inst.sing.finite]
    for a in range(len(qs)):
        for t in ts:
            if abs(qs[a] - t) < margin:
                raise FlowSingular(f"q{a + 1} within {margin} of a singular point", step)
        for b in range(a):
            if abs(qs[a] - qs[b]) < margin:
                raise FlowSingular(f"q{a + 1} and q{b + 1} within {margin}", step)


def float_velocity(template: Instance, direction: DeformationDirection, state: FloatState) -> tuple[np.ndarray, np.ndarray]:
    v = vector_field(state_instance(template, direction, state), direction)
    return np.array([float(x) for x in v.dq]), np.array([float(x) for x in v.deta])


def flow(
    inst: Instance,
    direction: DeformationDirection,
    h: float,
    steps: int,
    margin: float = 1e-6,
    velocity: Callable[[FloatState], tuple[np.ndarray, np.ndarray]] | None = None,
) -> list[FloatState]:
    """Classical RK4 on ``(q, eta)`` with the deformation parameter advancing linearly."""
    direction.check(inst)
    field = velocity or (lambda st: float_velocity(inst, direction, st))
    state = initial_state(inst)
    out = [state]

    def shifted(st: FloatState, dq: np.ndarray, de: np.ndarray, ds: float) -> FloatState:
        return FloatState(tuple(np.add(st.q, dq)), tuple(np.add(st.eta, de)), st.s + ds)

    for k in range(steps):
        _check_margin(state_instance(inst, direction, state), margin, k)
        try:
            k1 = field(state)
            s2 = shifted(state, h / 2 * k1[0], h / 2 * k1[1], h / 2)
            k2 = field(s2)
            s3 = shifted(state, h / 2 * k2[0], h / 2 * k2[1], h / 2)
            k3 = field(s3)
            s4 = shifted(state, h * k3[0], h * k3[1], h)
            k4 = field(s4)
        except ZeroDivisionError as exc:
            raise FlowSingular(f"vector field singular: {exc}", k) from exc
        dq = h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        de = h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        state = FloatState(
            tuple(float(x) for x in np.add(state.q, dq)),
            tuple(float(x) for x in np.add(state.eta, de)),
            (k + 1) * h,
        )
        out.append(state)
    if steps:
        _check_margin(state_instance(inst, direction, state), margin, steps)
    return out


# ---------------------------------------------------------------------------
# monodromy


@dataclass(frozen=True)
class Loop:
    """Closed path from ``base`` around the points in ``around``.

    For each center the path runs straight to the circle of radius
    ``radius``, once around it counterclockwise, and back to ``base``; the
    traversals are concatenated in order.
    """

    base: complex
    around: tuple[complex, ...]
    radius: float


def _numeric_matrix(conn: Connection) -> Callable[[complex], np.ndarray]:
    def coeffs(p: Poly) -> np.ndarray:
        return np.array([float(value_of(c)) for c in reversed(p.coeffs)] or [0.0])

    nums = [coeffs(e) for e in (conn.num.a, conn.num.b, conn.num.c, conn.num.d)]
    den = coeffs(conn.denominator())

    def omega(x: complex) -> np.ndarray:
        d = np.polyval(den, x)
        return np.array([np.polyval(n, x) for n in nums], dtype=complex).reshape(2, 2) / d

    return omega


def _segment_distance(a: complex, b: complex, p: complex) -> float:
    d = b - a
    if d == 0:
        return abs(p - a)
    tau = min(1.0, max(0.0, ((p - a) * d.conjugate()).real / abs(d) ** 2))
    return abs(a + tau * d - p)


def _check_clearance(conn: Connection, loop: Loop, margin: float) -> None:
    poles = [complex(float(value_of(p.position))) for p in conn.poles]
    for c in loop.around:
        direction = complex(loop.base) - c
        if abs(direction) <= loop.radius:
            raise IntegrationFailure("base point lies inside an encircling circle")
        entry = c + loop.radius * direction / abs(direction)
        for p in poles:
            if _segment_distance(complex(loop.base), entry, p) < margin or abs(abs(p - c) - loop.radius) < margin:
                raise IntegrationFailure(f"loop passes within {margin} of the pole at {p}")


def monodromy_trace(conn: Connection, loop: Loop, rtol: float = 1e-9, margin: float = 1e-6) -> complex:
    """Trace of the transport of ``dPsi = -Omega Psi`` along ``loop``.

    Integrated with an adaptive embedded Runge-Kutta pair (``DOP853``).
    The path must keep ``margin`` away from every finite pole.
    """
    _check_clearance(conn, loop, margin)
    omega = _numeric_matrix(conn)
    psi = np.eye(2, dtype=complex)

    def transport(path: Callable[[float], complex], speed: Callable[[float], complex], psi0: np.ndarray) -> np.ndarray:
        def rhs(tau: float, y: np.ndarray) -> np.ndarray:
            m = y.reshape(2, 2)
            return (-(omega(path(tau)) @ m) * speed(tau)).reshape(-1)

        sol = solve_ivp(rhs, (0.0, 1.0), psi0.reshape(-1), method="DOP853", rtol=rtol, atol=rtol * 1e-3)
        if not sol.success:
            raise IntegrationFailure(sol.message)
        return sol.y[:, -1].reshape(2, 2)

    for c in loop.around:
        start = complex(loop.base)
        direction = start - c
        entry = c + loop.radius * direction / abs(direction)
        phase = cmath.phase(direction)

        def segment(a: complex, b: complex) -> tuple[Callable[[float], complex], Callable[[float], complex]]:
            return (lambda tau: a + (b - a) * tau), (lambda tau: b - a)

        def circle(tau: float, c: complex = c, phase: float = phase) -> complex:
            return c + loop.radius * cmath.exp(1j * (phase + 2 * math.pi * tau))

        def circle_speed(tau: float, c: complex = c, phase: float = phase) -> complex:
            return 2j * math.pi * loop.radius * cmath.exp(1j * (phase + 2 * math.pi * tau))

        psi = transport(*segment(start, entry), psi)
        psi = transport(circle, circle_speed, psi)
        psi = transport(*segment(entry, start), psi)
    # psi solves along the path from identity; monodromy conjugacy class via trace
    return complex(np.trace(psi))
