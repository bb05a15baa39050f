"""Rank-2 connections in companion normal form and their apparent-point coordinates.

A normal-form connection lives on the bundle ``O + O(n-2)`` and has the
matrix ``[[0, 1/P], [c0, d0]] dx``.  Its partial-fraction data are fixed
by the local formal types at the singular points; the polynomial part is
fixed by requiring each ``q_j`` to be an apparent singularity.  The
elementary transformation ``[[1, 0], [Q2, Q1]]`` moves it to ``O + O(1)``,
where the apparent points reappear as the zeros of the (1,2) entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
import random
from typing import Any, Mapping, Sequence

import sympy

from .errors import (
    DegenerateConfiguration,
    InternalInconsistency,
    InvalidInstance,
    InvariantSubbundle,
    NonGenericApparentDivisor,
    PoleCollision,
)
from .exactalg import (
    INF,
    ONE,
    ZERO,
    Mat2,
    MatSeries,
    Parametric,
    Poly,
    RatFunc,
    Rational,
    Series,
    format_rational,
    parse_rational,
    residue_at,
    value_of,
)

__all__ = [
    "Kind",
    "Bundle",
    "SingularPoint",
    "SingularityData",
    "DarbouxPoint",
    "Instance",
    "LocalCoefficients",
    "NormalForm",
    "Connection",
    "Pole",
    "Diagnostic",
    "build_CD",
    "solve_tildeC",
    "assemble_normal_form",
    "to_E1",
    "apparent_data",
    "validate",
    "instance_parameters",
    "instance_from_parameters",
    "parametric_instance",
    "random_rational",
    "random_instance",
]


class Kind(str, Enum):
    REGULAR = "reg"
    UNRAMIFIED = "un"
    RAMIFIED = "ra"


class Bundle(str, Enum):
    E1 = "E1"
    EN2 = "En2"


@dataclass(frozen=True)
class SingularPoint:
    """A point of the polar divisor with its local formal data.

    Regular and unramified points carry ``theta_plus``/``theta_minus`` of
    length ``order``; ramified points carry ``theta`` of length ``2*order - 1``.
    """

    label: str
    position: Any
    order: int
    kind: Kind
    theta_plus: tuple[Any, ...] = ()
    theta_minus: tuple[Any, ...] = ()
    theta: tuple[Any, ...] = ()

    @property
    def is_infinite(self) -> bool:
        return self.position is INF

    @property
    def is_ramified(self) -> bool:
        return self.kind is Kind.RAMIFIED

    def theta_polys(self) -> tuple[Poly, Poly]:
        """``(Theta+, Theta-)`` with ``sum theta_l y^l``, unramified/regular only."""
        return Poly(self.theta_plus), Poly(self.theta_minus)

    def ramified_polys(self) -> tuple[Poly, Poly]:
        """``(A, B)`` built from the even and odd ramified data, halved."""
        n = self.order
        A = Poly(tuple(self.theta[2 * l] / 2 for l in range(n)))
        B = Poly(tuple(self.theta[2 * l + 1] / 2 for l in range(n - 1)))
        return A, B

    def residue_trace(self) -> Any:
        """Contribution of this point to the Fuchs sum."""
        if self.is_ramified:
            return self.theta[2 * self.order - 2] - Rational(1, 2)
        return self.theta_plus[-1] + self.theta_minus[-1]


@dataclass(frozen=True)
class SingularityData:
    points: tuple[SingularPoint, ...]

    @property
    def n(self) -> int:
        return sum(p.order for p in self.points)

    @property
    def finite(self) -> tuple[SingularPoint, ...]:
        return tuple(p for p in self.points if not p.is_infinite)

    @property
    def infinity(self) -> SingularPoint:
        for p in self.points:
            if p.is_infinite:
                return p
        raise InvalidInstance("the divisor must contain the point at infinity")

    def point(self, label: str) -> SingularPoint:
        for p in self.points:
            if p.label == label:
                return p
        raise KeyError(label)

    def P(self) -> Poly:
        """``prod (x - t_i)^{n_i}`` over finite points."""
        return Poly.from_roots((p.position, p.order) for p in self.finite)

    def movable_labels(self) -> tuple[str, ...]:
        """Finite points other than the two normalised ones, excluding ramified points."""
        return tuple(p.label for p in self.finite[2:] if not p.is_ramified)


@dataclass(frozen=True)
class DarbouxPoint:
    q: Any
    p: Any


@dataclass(frozen=True)
class Instance:
    sing: SingularityData
    darboux: tuple[DarbouxPoint, ...]


# ---------------------------------------------------------------------------
# local coefficients


@dataclass(frozen=True)
class LocalCoefficients:
    """The polynomials ``C_i, D_i`` at finite points and ``C_inf, D_inf``."""

    C: Mapping[str, Poly]
    D: Mapping[str, Poly]
    C_inf: Poly
    D_inf: Poly


def _others_product_at(sing: SingularityData, point: SingularPoint, order: int) -> Poly:
    """``prod_{j != i} (y + t_i - t_j)^{n_j}`` truncated mod ``y**order``."""
    out = Poly.const(ONE)
    for q in sing.finite:
        if q.label == point.label:
            continue
        out = (out * Poly((point.position - q.position, ONE)) ** q.order).truncate(order)
    return out


def _determinant_poly(point: SingularPoint) -> Poly:
    """Top coefficients of ``-det`` of the local diagonal (or ramified) form, scaled by ``y^{2n}``."""
    n = point.order
    if point.is_ramified:
        A, B = point.ramified_polys()
        y = Poly.x()
        return (A * A - (y ** (n - 1)) * A * Rational(1, 2) - y * B * B).truncate(n)
    tp, tm = point.theta_polys()
    return (tp * tm).truncate(n)


def _trace_poly(point: SingularPoint) -> Poly:
    n = point.order
    if point.is_ramified:
        A, _ = point.ramified_polys()
        return A * 2 - Poly.x() ** (n - 1) * Rational(1, 2)
    tp, tm = point.theta_polys()
    return tp + tm


def build_CD(sing: SingularityData) -> LocalCoefficients:
    """Partial-fraction numerators fixed by the local formal types.

    At a finite point ``D_i`` is the local trace and ``C_i`` is minus the
    local determinant divided by the (1,2) unit, both truncated to
    ``n_i`` coefficients and re-expanded in ``x``.  At infinity the same
    identities are read in ``w = 1/x``.
    """
    C: dict[str, Poly] = {}
    D: dict[str, Poly] = {}
    for pt in sing.finite:
        n = pt.order
        others = _others_product_at(sing, pt, n)
        c_y = -(_determinant_poly(pt) * others).truncate(n)
        d_y = _trace_poly(pt)
        C[pt.label] = c_y.shift(-pt.position)
        D[pt.label] = d_y.shift(-pt.position)
    inf = sing.infinity
    N = inf.order
    w_unit = Poly.const(ONE)
    for pt in sing.finite:
        w_unit = (w_unit * Poly((ONE, -pt.position)) ** pt.order).truncate(N)
    c_hat = -(_determinant_poly(inf) * w_unit).truncate(N)
    C_inf = c_hat.reversed(N - 1)
    if inf.is_ramified:
        d_coeffs = [-inf.theta[2 * (N - 2 - m)] for m in range(N - 1)]
    else:
        d_coeffs = [-(inf.theta_plus[N - 2 - m] + inf.theta_minus[N - 2 - m]) for m in range(N - 1)]
    return LocalCoefficients(C, D, C_inf, Poly(tuple(d_coeffs)))


# ---------------------------------------------------------------------------
# connections


def _inverse_power_series(a: Any, m: int, trunc: int) -> Series:
    """``(a + y)^-m`` as a Taylor series in ``y``."""
    inv = ONE / a
    c = inv**m
    coeffs = []
    for k in range(trunc + 1):
        coeffs.append(c)
        c = c * inv * Rational(-(m + k), k + 1)
    return Series(0, tuple(coeffs), trunc)


@dataclass(frozen=True)
class Pole:
    label: str
    position: Any
    multiplicity: int


@dataclass(frozen=True)
class Connection:
    """``Omega = num(x) / prod (x - r)^m  dx`` on ``O + O(twist)``.

    At infinity the matrix is read in ``w = 1/x`` after the gluing
    ``diag(1, x^twist)``.
    """

    bundle: Bundle
    num: Mat2
    poles: tuple[Pole, ...]
    twist: int
    sing: SingularityData
    darboux: tuple[DarbouxPoint, ...] = ()
    _expansions: dict[Any, MatSeries] = field(default_factory=dict, init=False, repr=False, compare=False)

    def denominator(self) -> Poly:
        return Poly.from_roots((p.position, p.multiplicity) for p in self.poles)

    def entry(self, i: int, j: int) -> RatFunc:
        """Exact entry as a reduced rational function (``Rational`` data only)."""
        return RatFunc(self.num.entry(i, j), self.denominator())

    def matrix(self) -> tuple[tuple[RatFunc, RatFunc], tuple[RatFunc, RatFunc]]:
        return ((self.entry(0, 0), self.entry(0, 1)), (self.entry(1, 0), self.entry(1, 1)))

    def pole(self, label: str) -> Pole:
        for p in self.poles:
            if p.label == label:
                return p
        raise KeyError(label)

    def _inverse_denominator_at(self, position: Any, label: str | None, order_hi: int) -> Series:
        out = Series(0, (ONE,), order_hi + sum(p.multiplicity for p in self.poles))
        for p in self.poles:
            if label is not None and p.label == label:
                out = out.shift_order(-p.multiplicity)
                continue
            out = out * _inverse_power_series(position - p.position, p.multiplicity, out.trunc - out.start)
        return out

    def expand(self, where: str | Any, order_hi: int) -> MatSeries:
        """Local matrix of ``Omega`` at a pole label, a position, or ``INF``.

        Finite points use ``y = x - position`` and the ``dy`` coefficient;
        ``INF`` (or the label of the infinite point) uses the ``w``-chart
        form ``G^-1 dG + G^-1 Omega G`` with ``G = diag(1, w^-twist)``.
        """
        label: str | None = None
        if isinstance(where, str):
            if where in {p.label for p in self.poles}:
                label = where
                position = self.pole(where).position
            elif where == self.sing.infinity.label:
                position = INF
            else:
                raise KeyError(where)
        else:
            position = where
        key = "inf" if position is INF else (label if label is not None else position)
        cached = self._expansions.get(key)
        if cached is not None and cached.truncation_order >= order_hi:
            return cached.with_trunc(order_hi)
        out = self._expand(position, label, order_hi)
        self._expansions[key] = out
        return out

    def _expand(self, position: Any, label: str | None, order_hi: int) -> MatSeries:
        if position is INF:
            return self._expand_infinity(order_hi)
        inv_den = self._inverse_denominator_at(position, label, order_hi)
        entries = []
        for e in (self.num.a, self.num.b, self.num.c, self.num.d):
            ps = e.shift(position).to_series(order_hi - inv_den.start)
            entries.append((ps * inv_den).with_trunc(order_hi))
        return MatSeries.from_entries(position if label is None else label, "x-t", entries)

    def _expand_infinity(self, order_hi: int) -> MatSeries:
        k = self.twist
        total = sum(p.multiplicity for p in self.poles)
        # f(1/w) = w^(total - deg) rev(num)(w) / prod (1 - r w)^m, then the dx -> dw factor
        # -w^-2 and the gluing weights w^-k, w^k on the off-diagonal entries
        nums = (self.num.a, self.num.b, self.num.c, self.num.d)
        extra = (-2, -2 - k, -2 + k, -2)
        shifts = [total - max(e.degree, 0) + extra[i] for i, e in enumerate(nums)]
        width = max(0, max(order_hi - s for s in shifts))
        inv_den = Series(0, (ONE,), width)
        for p in self.poles:
            inv_den = inv_den * Series(0, (ONE, -p.position), width).inverse() ** p.multiplicity
        entries = []
        for idx, e in enumerate(nums):
            rev = e.reversed(max(e.degree, 0)).to_series(width)
            s = -(rev * inv_den).shift_order(shifts[idx])
            if idx == 3 and k:
                s = s + Series.monomial(Rational(-k), -1, s.trunc)
            entries.append(s.with_trunc(order_hi))
        return MatSeries.from_entries(INF, "w", entries)

    def to_json(self) -> dict[str, Any]:
        return {
            "bundle": self.bundle.value,
            "omega0": [[self.entry(i, j).to_json() for j in range(2)] for i in range(2)],
        }


# ---------------------------------------------------------------------------
# normal form


@dataclass(frozen=True)
class NormalForm:
    """Partial-fraction data of the companion normal form on ``O + O(n-2)``."""

    sing: SingularityData
    darboux: tuple[DarbouxPoint, ...]
    local: LocalCoefficients
    C_tilde: Poly

    @property
    def n(self) -> int:
        return self.sing.n

    def P(self) -> Poly:
        return self.sing.P()

    def Q1(self) -> Poly:
        return Poly.from_roots((d.q, 1) for d in self.darboux)

    def Q2(self) -> Poly:
        return Poly.interpolate([d.q for d in self.darboux], [d.p for d in self.darboux])

    def polynomial_part(self) -> Poly:
        """``C_tilde + x^{n-3} C_inf``."""
        return self.C_tilde + Poly.x() ** (self.n - 3) * self.local.C_inf

    def _P_over(self, pt: SingularPoint) -> Poly:
        return Poly.from_roots((q.position, q.order) for q in self.sing.finite if q.label != pt.label)

    def c0_times_PQ1_parts(self) -> tuple[Poly, Poly]:
        """``(P*c0_regular_at_q, sum_j p_j P Q1/(x-q_j))`` with ``c0*P*Q1 = first*Q1 + second``."""
        P = self.P()
        first = self.polynomial_part() * P
        for pt in self.sing.finite:
            first = first + self.local.C[pt.label] * self._P_over(pt)
        second = Poly()
        for j, d in enumerate(self.darboux):
            others = Poly.from_roots((e.q, 1) for k, e in enumerate(self.darboux) if k != j)
            second = second + others * P * d.p
        return first, second

    def d0_regular_times_P(self) -> Poly:
        """``P * (sum D_i/(x-t_i)^{n_i} + D_inf)``."""
        out = self.local.D_inf * self.P()
        for pt in self.sing.finite:
            out = out + self.local.D[pt.label] * self._P_over(pt)
        return out

    def connection(self) -> Connection:
        """The normal form as a ``Connection`` on ``O + O(n-2)``."""
        P, Q1 = self.P(), self.Q1()
        first, second = self.c0_times_PQ1_parts()
        dq = Poly()
        for j in range(len(self.darboux)):
            dq = dq + Poly.from_roots((e.q, 1) for k, e in enumerate(self.darboux) if k != j)
        num = Mat2(
            Poly(),
            Q1,
            first * Q1 + second,
            self.d0_regular_times_P() * Q1 - P * dq,
        )
        poles = tuple(Pole(p.label, p.position, p.order) for p in self.sing.finite) + tuple(
            Pole(f"q{j + 1}", d.q, 1) for j, d in enumerate(self.darboux)
        )
        return Connection(Bundle.EN2, num, poles, self.n - 2, self.sing, self.darboux)

    def c0(self) -> RatFunc:
        return self.connection().entry(1, 0)

    def d0(self) -> RatFunc:
        return self.connection().entry(1, 1)

    def K(self) -> tuple[Any, ...]:
        """Coefficients of the polynomial part ``C_tilde`` in ascending order."""
        return tuple(self.C_tilde.coeff(k) for k in range(max(self.n - 3, 0)))


def _elementary_residue(conn: Connection, j: int) -> Any:
    """(2,1) residue at ``q_j`` after the gauge ``[[1,0],[p_j, x-q_j]]``."""
    d = conn.darboux[j]
    label = f"q{j + 1}"
    om = conn.expand(label, 1)
    gauge = MatSeries(label, "x-t", 0, (Mat2(ONE, ZERO, d.p, ZERO), Mat2(ZERO, ZERO, ZERO, ONE)), 3)
    inv = gauge.inverse()
    transformed = inv @ gauge.deriv() + inv @ om @ gauge
    return transformed[-1].c


def solve_tildeC(sing: SingularityData, darboux: Sequence[DarbouxPoint], local: LocalCoefficients | None = None) -> Poly:
    """The polynomial of degree ``<= n-4`` making every ``q_j`` apparent.

    Each condition is read off the ``(x - q_j)^-1`` coefficient of the
    elementary transform at ``q_j``; the unknown enters that coefficient as
    ``C_tilde(q_j)`` so the conditions are interpolation data.
    """
    local = local if local is not None else build_CD(sing)
    darboux = tuple(darboux)
    qs = [d.q for d in darboux]
    for a in range(len(qs)):
        for b in range(a):
            if value_of(qs[a]) == value_of(qs[b]):
                raise DegenerateConfiguration(f"q{a + 1} coincides with q{b + 1}; the interpolation system is singular")
    base = NormalForm(sing, darboux, local, Poly()).connection()
    values = [-_elementary_residue(base, j) for j in range(len(darboux))]
    return Poly.interpolate(qs, values)


def assemble_normal_form(sing: SingularityData, darboux: Sequence[DarbouxPoint]) -> NormalForm:
    darboux = tuple(darboux)
    local = build_CD(sing)
    return NormalForm(sing, darboux, local, solve_tildeC(sing, darboux, local))


def to_E1(nf: NormalForm) -> Connection:
    """Elementary transform by ``[[1, 0], [Q2, Q1]]`` to ``O + O(1)``.

    The apparent poles cancel; the (2,1) numerator is divided exactly by
    ``Q1^2`` and a nonzero remainder is reported as an inconsistency.
    """
    P, Q1, Q2 = nf.P(), nf.Q1(), nf.Q2()
    first, second = nf.c0_times_PQ1_parts()
    d0P = nf.d0_regular_times_P()
    # P * (2,1) * Q1^2 = Q1 (P c0)_reg + sum_j p_j P Q1/(x-q_j) + Q2 Q1 (P d0)_reg - Q2 P Q1'
    #                     + Q1 (Q2' P - Q2^2)
    numer = Q1 * first + second + Q2 * Q1 * d0P - Q2 * P * Q1.deriv() + Q1 * (Q2.deriv() * P - Q2 * Q2)
    quot, rem = numer.divmod(Q1 * Q1)
    if not rem.is_zero():
        raise InternalInconsistency("residual pole at an apparent point after the elementary transform")
    num = Mat2(Q2, Q1, quot, d0P - Q2)
    poles = tuple(Pole(p.label, p.position, p.order) for p in nf.sing.finite)
    return Connection(Bundle.E1, num, poles, 1, nf.sing, nf.darboux)


def _rational_roots(B: Poly) -> list[tuple[Rational, int]]:
    x = sympy.Symbol("x")
    expr = sum(sympy.Rational(int(c.numerator), int(c.denominator)) * x**k for k, c in enumerate(B.coeffs))
    _, factors = sympy.factor_list(sympy.Poly(expr, x, domain="QQ"))
    roots = []
    for f, mult in factors:
        if f.degree() != 1:
            raise NonGenericApparentDivisor(f"(1,2) numerator has an irreducible factor of degree {f.degree()}")
        a, b = f.all_coeffs()
        r = -sympy.Rational(b) / sympy.Rational(a)
        roots.append((Rational(int(r.p), int(r.q)), int(mult)))
    return roots


def apparent_data(conn: Connection) -> list[DarbouxPoint]:
    """Recover ``(q_j, p_j)`` from a connection on ``O + O(1)``.

    ``q_j`` are the zeros of the (1,2) numerator; ``p_j`` is the residue at
    ``q_j`` of the (2,1) entry after the gauge ``[[1,0],[-A/B, 1/B]]`` that
    restores the companion shape.
    """
    if conn.bundle is not Bundle.E1:
        raise ValueError("apparent_data expects a connection on O + O(1)")
    n = conn.sing.n
    A, B = conn.num.a, conn.num.b
    if B.is_zero():
        raise InvariantSubbundle("the (1,2) entry vanishes identically")
    if n == 3:
        return []
    if B.degree != n - 3:
        raise NonGenericApparentDivisor(f"(1,2) numerator has degree {B.degree}, expected {n - 3}")
    roots = _rational_roots(B)
    if any(m > 1 for _, m in roots):
        raise NonGenericApparentDivisor("(1,2) numerator has a repeated root")
    positions = {value_of(p.position) for p in conn.poles}
    for r, _ in roots:
        if r in positions:
            raise NonGenericApparentDivisor(f"apparent point {format_rational(r)} collides with a singular point")
    Cn, Dn = conn.num.c, conn.num.d
    den = conn.denominator()
    a_ = RatFunc(A, B)
    # (2,1) entry of H^-1 dH + H^-1 Omega H with H = [[1,0],[-A/B, 1/B]]
    entry21 = RatFunc(B * Cn - A * Dn, den) - a_.deriv() * RatFunc(B)
    out = []
    for r, _ in sorted(roots):
        out.append(DarbouxPoint(r, residue_at(entry21, r)))
    return out


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    check: str
    ok: bool
    detail: str = ""


def validate(sing: SingularityData, darboux: Sequence[DarbouxPoint]) -> list[Diagnostic]:
    """Itemised structural checks; never raises."""
    out: list[Diagnostic] = []
    try:
        sing.infinity
        out.append(Diagnostic("infinity present", True))
    except InvalidInstance as exc:
        out.append(Diagnostic("infinity present", False, str(exc)))
    n = sing.n
    out.append(Diagnostic("n >= 3", n >= 3, f"n = {n}"))
    labels = [p.label for p in sing.points]
    out.append(Diagnostic("labels distinct", len(set(labels)) == len(labels)))
    fin = sing.finite
    pos = [value_of(p.position) for p in fin]
    out.append(Diagnostic("positions distinct", len(set(pos)) == len(pos)))
    fixed_ok = (len(fin) < 1 or pos[0] == 0) and (len(fin) < 2 or pos[1] == 1)
    out.append(Diagnostic("t1 = 0 and t2 = 1", fixed_ok, f"positions {[format_rational(p) for p in pos]}"))
    for p in sing.points:
        name = f"point {p.label}"
        if p.kind is Kind.RAMIFIED:
            ok = p.order > 1 and len(p.theta) == 2 * p.order - 1
            out.append(Diagnostic(f"{name} shape", ok, f"order {p.order}, {len(p.theta)} theta values"))
            if ok:
                out.append(Diagnostic(f"{name} theta_1 != 0", value_of(p.theta[1]) != 0))
            continue
        ok = len(p.theta_plus) == p.order and len(p.theta_minus) == p.order
        if p.kind is Kind.REGULAR:
            ok = ok and p.order == 1
        else:
            ok = ok and p.order > 1
        out.append(Diagnostic(f"{name} shape", ok, f"kind {p.kind.value}, order {p.order}"))
        if not ok:
            continue
        diff = value_of(p.theta_plus[0]) - value_of(p.theta_minus[0])
        if p.kind is Kind.REGULAR:
            out.append(Diagnostic(f"{name} theta+_0 - theta-_0 not an integer", diff.denominator != 1, f"difference {format_rational(diff)}"))
        else:
            out.append(Diagnostic(f"{name} theta+_0 != theta-_0", diff != 0))
    try:
        fuchs = sum((value_of(p.residue_trace()) for p in sing.points), Rational(0))
        out.append(Diagnostic("Fuchs relation", fuchs == -1, f"sum = {format_rational(fuchs)}"))
    except (IndexError, TypeError) as exc:
        out.append(Diagnostic("Fuchs relation", False, f"cannot evaluate: {exc}"))
    out.append(Diagnostic("darboux count = n - 3", len(darboux) == n - 3, f"{len(darboux)} points, n = {n}"))
    qs = [value_of(d.q) for d in darboux]
    out.append(Diagnostic("q distinct", len(set(qs)) == len(qs)))
    clash = sorted(set(qs) & set(pos))
    out.append(Diagnostic("q off the divisor", not clash, f"collisions {[format_rational(c) for c in clash]}"))
    return out


def ensure_valid(sing: SingularityData, darboux: Sequence[DarbouxPoint]) -> None:
    failures = [d for d in validate(sing, darboux) if not d.ok]
    if failures:
        msg = "; ".join(f"{d.check} ({d.detail})" if d.detail else d.check for d in failures)
        if any(d.check == "q off the divisor" for d in failures):
            raise PoleCollision(msg)
        raise InvalidInstance(msg)


# ---------------------------------------------------------------------------
# parameters


def instance_parameters(inst: Instance) -> dict[str, Rational]:
    """Flatten an instance into named rational coordinates."""
    out: dict[str, Rational] = {}
    for p in inst.sing.points:
        if not p.is_infinite:
            out[f"t:{p.label}"] = value_of(p.position)
        if p.is_ramified:
            for l, v in enumerate(p.theta):
                out[f"theta:{p.label}:{l}"] = value_of(v)
        else:
            for l, v in enumerate(p.theta_plus):
                out[f"theta+:{p.label}:{l}"] = value_of(v)
            for l, v in enumerate(p.theta_minus):
                out[f"theta-:{p.label}:{l}"] = value_of(v)
    for j, d in enumerate(inst.darboux):
        out[f"q{j + 1}"] = value_of(d.q)
        out[f"p{j + 1}"] = value_of(d.p)
    return out


def instance_from_parameters(template: Instance, values: Mapping[str, Any]) -> Instance:
    """Rebuild ``template`` with coordinates taken from ``values``."""
    pts = []
    for p in template.sing.points:
        pos = p.position if p.is_infinite else values[f"t:{p.label}"]
        if p.is_ramified:
            th = tuple(values[f"theta:{p.label}:{l}"] for l in range(len(p.theta)))
            pts.append(replace(p, position=pos, theta=th))
        else:
            tp = tuple(values[f"theta+:{p.label}:{l}"] for l in range(len(p.theta_plus)))
            tm = tuple(values[f"theta-:{p.label}:{l}"] for l in range(len(p.theta_minus)))
            pts.append(replace(p, position=pos, theta_plus=tp, theta_minus=tm))
    dar = tuple(DarbouxPoint(values[f"q{j + 1}"], values[f"p{j + 1}"]) for j in range(len(template.darboux)))
    return Instance(SingularityData(tuple(pts)), dar)


def parametric_instance(inst: Instance) -> Parametric:
    return Parametric(lambda v: instance_from_parameters(inst, v), instance_parameters(inst))


# ---------------------------------------------------------------------------
# JSON


def _theta_to_json(p: SingularPoint) -> dict[str, list[str]]:
    if p.is_ramified:
        return {"theta": [format_rational(value_of(v)) for v in p.theta]}
    return {
        "plus": [format_rational(value_of(v)) for v in p.theta_plus],
        "minus": [format_rational(value_of(v)) for v in p.theta_minus],
    }


def instance_to_json(inst: Instance) -> dict[str, Any]:
    return {
        "schema_version": 1,
        "points": [
            {
                "label": p.label,
                "pos": "inf" if p.is_infinite else format_rational(value_of(p.position)),
                "order": p.order,
                "kind": p.kind.value,
                "theta": _theta_to_json(p),
            }
            for p in inst.sing.points
        ],
        "darboux": [{"q": format_rational(value_of(d.q)), "p": format_rational(value_of(d.p))} for d in inst.darboux],
    }


def instance_from_json(data: Mapping[str, Any]) -> Instance:
    """Parse the instance schema; raises ``InvalidInstance`` on malformed input."""
    try:
        pts = []
        finite_count = 0
        for raw in data["points"]:
            kind = Kind(raw["kind"])
            order = int(raw["order"])
            pos_raw = raw["pos"]
            if pos_raw == "inf":
                pos: Any = INF
                default_label = "inf"
            else:
                pos = parse_rational(pos_raw)
                finite_count += 1
                default_label = f"t{finite_count}"
            label = raw.get("label", default_label)
            th = raw.get("theta", {})
            if kind is Kind.RAMIFIED:
                pts.append(SingularPoint(label, pos, order, kind, theta=tuple(parse_rational(v) for v in th["theta"])))
            else:
                pts.append(
                    SingularPoint(
                        label,
                        pos,
                        order,
                        kind,
                        theta_plus=tuple(parse_rational(v) for v in th["plus"]),
                        theta_minus=tuple(parse_rational(v) for v in th["minus"]),
                    )
                )
        dar = tuple(DarbouxPoint(parse_rational(d["q"]), parse_rational(d["p"])) for d in data.get("darboux", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInstance(f"malformed instance: {exc}") from exc
    return Instance(SingularityData(tuple(pts)), dar)


# ---------------------------------------------------------------------------
# random instances


def random_rational(rng: random.Random, height: int = 50) -> Rational:
    """Small-height rational with numerator and denominator bounded by ``height``."""
    return Rational(rng.randint(-height, height), rng.randint(1, height))


def _random_point(rng: random.Random, label: str, pos: Any, kind: Kind, order: int, height: int) -> SingularPoint:
    r = lambda: random_rational(rng, height)  # noqa: E731
    if kind is Kind.RAMIFIED:
        th = [r() for _ in range(2 * order - 1)]
        while not th[1]:
            th[1] = r()
        return SingularPoint(label, pos, order, kind, theta=tuple(th))
    tp = [r() for _ in range(order)]
    tm = [r() for _ in range(order)]
    while tp[0] == tm[0] or (kind is Kind.REGULAR and (tp[0] - tm[0]).denominator == 1):
        tm[0] = r()
    return SingularPoint(label, pos, order, kind, theta_plus=tuple(tp), theta_minus=tuple(tm))


def _fix_fuchs(p: SingularPoint, excess: Rational) -> SingularPoint:
    """Shift the residue part of ``p`` so the Fuchs sum drops by ``excess``."""
    if p.is_ramified:
        th = list(p.theta)
        th[-1] -= excess
        return replace(p, theta=tuple(th))
    tm = list(p.theta_minus)
    tm[-1] -= excess
    return replace(p, theta_minus=tuple(tm))


def random_instance(
    rng: random.Random,
    finite: Sequence[tuple[Kind, int]],
    infinity: tuple[Kind, int],
    height: int = 9,
    attempts: int = 200,
) -> Instance:
    """A valid instance with the requested local types.

    ``finite`` lists ``(kind, order)`` for ``t1 = 0``, ``t2 = 1`` and any
    further points, which get random positions.  Draws are repeated until
    the instance validates and its normal form can be assembled.
    """
    for _ in range(attempts):
        pts = []
        used: set[Rational] = set()
        for i, (kind, order) in enumerate(finite):
            if i < 2:
                pos: Any = Rational(i)
            else:
                pos = random_rational(rng, height)
                while pos in used:
                    pos = random_rational(rng, height)
            used.add(pos)
            pts.append(_random_point(rng, f"t{i + 1}", pos, kind, order, height))
        pts.append(_random_point(rng, "inf", INF, infinity[0], infinity[1], height))
        excess = sum((value_of(p.residue_trace()) for p in pts), Rational(0)) + 1
        pts[-1] = _fix_fuchs(pts[-1], excess)
        sing = SingularityData(tuple(pts))
        qs: list[Rational] = []
        while len(qs) < sing.n - 3:
            q = random_rational(rng, height)
            if q not in used and q not in qs:
                qs.append(q)
        dar = tuple(DarbouxPoint(q, random_rational(rng, height)) for q in qs)
        if any(not d.ok for d in validate(sing, dar)):
            continue
        try:
            assemble_normal_form(sing, dar)
        except InvalidInstance:
            continue
        return Instance(sing, dar)
    raise InvalidInstance("could not draw a valid instance with the requested local types")
