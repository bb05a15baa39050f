"""Exact scalars, polynomials, rational functions, truncated series and jets.

Every container here is generic over the scalar ring: coefficients may be
``Rational`` (gmpy2 ``mpq``) or ``Jet`` (first-order dual numbers over
``Rational``).  Only operations that need a field with a zero test that is
also a unit test (gcd normalisation, root finding, linear solving) are
restricted to ``Rational``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import math
from typing import Any, Callable, Iterable, Mapping, Sequence, Union

from gmpy2 import mpq as Rational
from gmpy2 import mpz

from .errors import NoSolution, TruncationError, Unexpandable, UnknownDirection

__all__ = [
    "INF",
    "Rational",
    "Jet",
    "Scalar",
    "Poly",
    "RatFunc",
    "Series",
    "Mat2",
    "MatSeries",
    "LinearSolution",
    "Parametric",
    "parse_rational",
    "format_rational",
    "value_of",
    "deriv_of",
    "is_zero",
    "residue_at",
    "laurent_expand",
    "solve_linear",
    "jet_lift",
]

ZERO = Rational(0)
ONE = Rational(1)


class _Infinity:
    """Marker for the point at infinity; expansions there use w = 1/x."""

    _instance: _Infinity | None = None

    def __new__(cls) -> _Infinity:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INF"

    def __reduce__(self) -> str:
        return "INF"


INF = _Infinity()


# ---------------------------------------------------------------------------
# scalars


def parse_rational(text: str | int | Rational) -> Rational:
    """Parse ``"p/q"`` (or an integer) into a reduced ``Rational``."""
    if isinstance(text, (Rational, Fraction)):
        return Rational(text)
    if isinstance(text, int) and not isinstance(text, bool):
        return Rational(text)
    if not isinstance(text, str):
        raise ValueError(f"expected a rational string, got {text!r}")
    s = text.strip()
    num, sep, den = s.partition("/")
    try:
        if sep:
            d = int(den)
            if d == 0:
                raise ValueError("zero denominator")
            return Rational(int(num), d)
        return Rational(int(num))
    except ValueError as exc:
        raise ValueError(f"malformed rational {text!r}") from exc


def format_rational(x: Rational | int) -> str:
    """Canonical ``"p/q"`` form, dropping ``/1``."""
    x = Rational(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True, slots=True, eq=False)
class Jet:
    """First-order jet ``value + eps * derivative`` with ``eps**2 = 0``."""

    value: Rational
    derivative: Rational = ZERO

    def __add__(self, other: Any) -> Jet:
        if isinstance(other, Jet):
            return Jet(self.value + other.value, self.derivative + other.derivative)
        return Jet(self.value + other, self.derivative)

    __radd__ = __add__

    def __sub__(self, other: Any) -> Jet:
        if isinstance(other, Jet):
            return Jet(self.value - other.value, self.derivative - other.derivative)
        return Jet(self.value - other, self.derivative)

    def __rsub__(self, other: Any) -> Jet:
        return Jet(other - self.value, -self.derivative)

    def __neg__(self) -> Jet:
        return Jet(-self.value, -self.derivative)

    def __pos__(self) -> Jet:
        return self

    def __mul__(self, other: Any) -> Jet:
        if isinstance(other, Jet):
            return Jet(
                self.value * other.value,
                self.value * other.derivative + self.derivative * other.value,
            )
        return Jet(self.value * other, self.derivative * other)

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> Jet:
        if isinstance(other, Jet):
            c, d = other.value, other.derivative
            if c == 0:
                raise ZeroDivisionError("jet with zero value is not invertible")
            return Jet(self.value / c, (self.derivative * c - self.value * d) / (c * c))
        return Jet(self.value / other, self.derivative / other)

    def __rtruediv__(self, other: Any) -> Jet:
        c, d = self.value, self.derivative
        if c == 0:
            raise ZeroDivisionError("jet with zero value is not invertible")
        return Jet(other / c, -other * d / (c * c))

    def __pow__(self, k: int) -> Jet:
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            return ONE / (self ** (-k))
        return Jet(self.value**k, k * self.value ** (k - 1) * self.derivative if k else ZERO)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Jet):
            return self.value == other.value and self.derivative == other.derivative
        if isinstance(other, (int, Rational, Fraction)):
            return self.derivative == 0 and self.value == other
        return NotImplemented

    def __hash__(self) -> int:
        if self.derivative == 0:
            return hash(self.value)
        return hash((self.value, self.derivative))

    def __bool__(self) -> bool:
        return bool(self.value) or bool(self.derivative)

    def __repr__(self) -> str:
        return f"Jet({format_rational(self.value)}, {format_rational(self.derivative)})"


Scalar = Union[Rational, Jet]


def value_of(x: Any) -> Rational:
    return x.value if isinstance(x, Jet) else Rational(x)


def deriv_of(x: Any) -> Rational:
    return x.derivative if isinstance(x, Jet) else ZERO


def is_zero(x: Any) -> bool:
    return not x


def _is_unit(x: Any) -> bool:
    return value_of(x) != 0


# ---------------------------------------------------------------------------
# polynomials


def _strip(coeffs: Iterable[Any]) -> tuple[Any, ...]:
    out = list(coeffs)
    while out and not out[-1]:
        out.pop()
    return tuple(out)


@dataclass(frozen=True, slots=True)
class Poly:
    """Univariate polynomial with ascending coefficients, trailing zeros stripped."""

    coeffs: tuple[Any, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", _strip(self.coeffs))

    @classmethod
    def const(cls, c: Any) -> Poly:
        return cls((c,))

    @classmethod
    def x(cls) -> Poly:
        return cls((ZERO, ONE))

    @classmethod
    def linear_factor(cls, root: Any) -> Poly:
        """``x - root``."""
        return cls((-root, ONE))

    @classmethod
    def from_roots(cls, roots: Iterable[tuple[Any, int]]) -> Poly:
        out = cls.const(ONE)
        for r, m in roots:
            out = out * cls.linear_factor(r) ** m
        return out

    @property
    def degree(self) -> int:
        """Degree, with ``-1`` for the zero polynomial."""
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def coeff(self, k: int) -> Any:
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else ZERO

    @property
    def lead(self) -> Any:
        return self.coeffs[-1] if self.coeffs else ZERO

    def __add__(self, other: Any) -> Poly:
        if not isinstance(other, Poly):
            other = Poly.const(other)
        a, b = self.coeffs, other.coeffs
        if len(a) < len(b):
            a, b = b, a
        out = list(a)
        for i, c in enumerate(b):
            out[i] = out[i] + c
        return Poly(tuple(out))

    __radd__ = __add__

    def __neg__(self) -> Poly:
        return Poly(tuple(-c for c in self.coeffs))

    def __sub__(self, other: Any) -> Poly:
        if not isinstance(other, Poly):
            other = Poly.const(other)
        return self + (-other)

    def __rsub__(self, other: Any) -> Poly:
        return Poly.const(other) - self

    def __mul__(self, other: Any) -> Poly:
        if not isinstance(other, Poly):
            return Poly(tuple(c * other for c in self.coeffs))
        a, b = self.coeffs, other.coeffs
        if not a or not b:
            return Poly()
        out = [ZERO] * (len(a) + len(b) - 1)
        for i, ca in enumerate(a):
            if not ca:
                continue
            for j, cb in enumerate(b):
                out[i + j] = out[i + j] + ca * cb
        return Poly(tuple(out))

    __rmul__ = __mul__

    def __pow__(self, k: int) -> Poly:
        out = Poly.const(ONE)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __call__(self, x: Any) -> Any:
        acc: Any = ZERO
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def deriv(self) -> Poly:
        return Poly(tuple(k * c for k, c in enumerate(self.coeffs) if k))

    def shift(self, a: Any) -> Poly:
        """Return ``q`` with ``q(y) = self(y + a)`` (Taylor shift)."""
        out: list[Any] = list(self.coeffs)
        n = len(out)
        for i in range(n - 1):
            for j in range(n - 2, i - 1, -1):
                out[j] = out[j] + a * out[j + 1]
        return Poly(tuple(out))

    def truncate(self, k: int) -> Poly:
        """Reduce modulo ``x**k``."""
        return Poly(self.coeffs[:k])

    def reversed(self, d: int) -> Poly:
        """``x**d * self(1/x)``; requires ``d >= degree``."""
        if d < self.degree:
            raise ValueError("reversal degree below polynomial degree")
        padded = list(self.coeffs) + [ZERO] * (d + 1 - len(self.coeffs))
        return Poly(tuple(reversed(padded)))

    def divmod(self, other: Poly) -> tuple[Poly, Poly]:
        """Euclidean division; ``other`` must have a unit leading coefficient."""
        if other.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        lead = other.lead
        if not _is_unit(lead):
            raise ZeroDivisionError("leading coefficient is not a unit")
        rem = list(self.coeffs)
        dq = len(rem) - len(other.coeffs)
        if dq < 0:
            return Poly(), self
        quot = [ZERO] * (dq + 1)
        oc = other.coeffs
        for k in range(dq, -1, -1):
            c = rem[k + len(oc) - 1]
            if not c:
                continue
            c = c / lead
            quot[k] = c
            for j, o in enumerate(oc):
                rem[k + j] = rem[k + j] - c * o
        return Poly(tuple(quot)), Poly(tuple(rem[: len(oc) - 1]))

    def __floordiv__(self, other: Poly) -> Poly:
        return self.divmod(other)[0]

    def __mod__(self, other: Poly) -> Poly:
        return self.divmod(other)[1]

    def monic(self) -> Poly:
        return self * (ONE / self.lead)

    def gcd(self, other: Poly) -> Poly:
        """Monic gcd over ``Rational`` coefficients."""
        a, b = self, other
        while not b.is_zero():
            a, b = b, a % b
        return a.monic() if not a.is_zero() else a

    def map(self, fn: Callable[[Any], Any]) -> Poly:
        return Poly(tuple(fn(c) for c in self.coeffs))

    def to_series(self, order_hi: int) -> Series:
        """Exact power series in the polynomial variable, known through ``order_hi``."""
        coeffs = tuple(self.coeff(k) for k in range(order_hi + 1))
        return Series(0, coeffs, order_hi)

    @staticmethod
    def interpolate(xs: Sequence[Any], ys: Sequence[Any]) -> Poly:
        """Lagrange interpolant of degree < len(xs) through the given nodes."""
        if len(xs) != len(ys):
            raise ValueError("node and value counts differ")
        m = len(xs)
        weights = []
        for j in range(m):
            w: Any = ONE
            for k in range(m):
                if k != j:
                    w = w * (xs[j] - xs[k])
            weights.append(ONE / w)
        out = Poly()
        for j in range(m):
            basis = Poly.const(ys[j] * weights[j])
            for k in range(m):
                if k != j:
                    basis = basis * Poly.linear_factor(xs[k])
            out = out + basis
        return out

    def to_json(self) -> list[str]:
        return [format_rational(value_of(c)) for c in self.coeffs]

    def __repr__(self) -> str:
        if not self.coeffs:
            return "Poly(0)"
        terms = [f"{c}*x^{k}" for k, c in enumerate(self.coeffs) if c]
        return "Poly(" + " + ".join(terms) + ")"


# ---------------------------------------------------------------------------
# truncated Laurent series


@dataclass(frozen=True, slots=True)
class Series:
    """Laurent series ``sum c_k y^k`` for ``start <= k``, exact through ``trunc``.

    ``coeffs[i]`` is the coefficient of ``y**(start + i)``; orders above
    ``trunc`` are unknown and any attempt to read them raises.
    """

    start: int
    coeffs: tuple[Any, ...]
    trunc: int

    def __post_init__(self) -> None:
        width = self.trunc - self.start + 1
        if width < 0:
            object.__setattr__(self, "start", self.trunc + 1)
            object.__setattr__(self, "coeffs", ())
            return
        cs = tuple(self.coeffs[:width])
        if len(cs) < width:
            cs = cs + (ZERO,) * (width - len(cs))
        object.__setattr__(self, "coeffs", cs)

    @classmethod
    def monomial(cls, c: Any, k: int, trunc: int) -> Series:
        return cls(k, (c,), trunc)

    @classmethod
    def zero(cls, trunc: int) -> Series:
        return cls(trunc + 1, (), trunc)

    def __getitem__(self, k: int) -> Any:
        if k > self.trunc:
            raise TruncationError(f"coefficient y^{k} requested, series known through y^{self.trunc}")
        if k < self.start:
            return ZERO
        return self.coeffs[k - self.start]

    def residue(self) -> Any:
        return self[-1]

    def valuation(self) -> int | None:
        """Order of the first coefficient with nonzero value part, if any."""
        for i, c in enumerate(self.coeffs):
            if value_of(c) != 0:
                return self.start + i
        return None

    def normalized(self) -> Series:
        """Drop leading exactly-zero coefficients."""
        i = 0
        while i < len(self.coeffs) and not self.coeffs[i]:
            i += 1
        return Series(self.start + i, self.coeffs[i:], self.trunc)

    def with_trunc(self, trunc: int) -> Series:
        if trunc > self.trunc:
            raise TruncationError(f"cannot extend precision from {self.trunc} to {trunc}")
        return Series(self.start, self.coeffs, trunc)

    def __add__(self, other: Any) -> Series:
        if not isinstance(other, Series):
            other = Series(0, (other,), self.trunc)
        start = min(self.start, other.start)
        trunc = min(self.trunc, other.trunc)
        out = [self[k] + other[k] for k in range(start, trunc + 1)]
        return Series(start, tuple(out), trunc)

    __radd__ = __add__

    def __neg__(self) -> Series:
        return Series(self.start, tuple(-c for c in self.coeffs), self.trunc)

    def __sub__(self, other: Any) -> Series:
        if not isinstance(other, Series):
            other = Series(0, (other,), self.trunc)
        return self + (-other)

    def __rsub__(self, other: Any) -> Series:
        return (-self) + other

    def __mul__(self, other: Any) -> Series:
        if not isinstance(other, Series):
            return Series(self.start, tuple(c * other for c in self.coeffs), self.trunc)
        a, b = self.normalized(), other.normalized()
        start = a.start + b.start
        trunc = min(a.trunc + b.start, b.trunc + a.start)
        width = trunc - start + 1
        if width <= 0:
            return Series.zero(trunc)
        out = [ZERO] * width
        ac, bc = a.coeffs, b.coeffs
        for i in range(min(len(ac), width)):
            ci = ac[i]
            if not ci:
                continue
            for j in range(min(len(bc), width - i)):
                out[i + j] = out[i + j] + ci * bc[j]
        return Series(start, tuple(out), trunc)

    __rmul__ = __mul__

    def inverse(self) -> Series:
        s = self.normalized()
        if not s.coeffs or not _is_unit(s.coeffs[0]):
            raise Unexpandable("series has no invertible leading coefficient")
        rel = s.trunc - s.start
        c0 = s.coeffs[0]
        inv0 = ONE / c0
        out = [inv0]
        for k in range(1, rel + 1):
            acc: Any = ZERO
            for j in range(1, k + 1):
                if j < len(s.coeffs) and s.coeffs[j]:
                    acc = acc + s.coeffs[j] * out[k - j]
            out.append(-acc * inv0)
        return Series(-s.start, tuple(out), -s.start + rel)

    def __truediv__(self, other: Any) -> Series:
        if isinstance(other, Series):
            return self * other.inverse()
        return self * (ONE / other)

    def __pow__(self, k: int) -> Series:
        if k < 0:
            return self.inverse() ** (-k)
        if k == 0:
            return Series(0, (ONE,), self.trunc - self.start)
        out: Series | None = None
        base = self
        while k:
            if k & 1:
                out = base if out is None else out * base
            k >>= 1
            if k:
                base = base * base
        assert out is not None
        return out

    def deriv(self) -> Series:
        cs = tuple((self.start + i) * c for i, c in enumerate(self.coeffs))
        return Series(self.start - 1, cs, self.trunc - 1)

    def shift_order(self, k: int) -> Series:
        """Multiply by ``y**k``."""
        return Series(self.start + k, self.coeffs, self.trunc + k)

    def map(self, fn: Callable[[Any], Any]) -> Series:
        return Series(self.start, tuple(fn(c) for c in self.coeffs), self.trunc)

    def values(self) -> Series:
        return self.map(value_of)

    def derivs(self) -> Series:
        return self.map(deriv_of)

    def polar_part(self) -> dict[int, Any]:
        return {self.start + i: c for i, c in enumerate(self.coeffs) if self.start + i < 0 and c}

    def __repr__(self) -> str:
        terms = [f"{c}*y^{self.start + i}" for i, c in enumerate(self.coeffs) if c]
        return f"Series({' + '.join(terms) or '0'} + O(y^{self.trunc + 1}))"


# ---------------------------------------------------------------------------
# 2x2 matrices and matrix series


@dataclass(frozen=True, slots=True)
class Mat2:
    """A 2x2 matrix ``[[a, b], [c, d]]`` over any ring."""

    a: Any
    b: Any
    c: Any
    d: Any

    @classmethod
    def identity(cls) -> Mat2:
        return cls(ONE, ZERO, ZERO, ONE)

    @classmethod
    def zero(cls) -> Mat2:
        return cls(ZERO, ZERO, ZERO, ZERO)

    @classmethod
    def diag(cls, p: Any, q: Any) -> Mat2:
        return cls(p, ZERO, ZERO, q)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[Any]]) -> Mat2:
        (a, b), (c, d) = rows
        return cls(a, b, c, d)

    def rows(self) -> tuple[tuple[Any, Any], tuple[Any, Any]]:
        return ((self.a, self.b), (self.c, self.d))

    def entry(self, i: int, j: int) -> Any:
        return self.rows()[i][j]

    def __add__(self, o: Mat2) -> Mat2:
        return Mat2(self.a + o.a, self.b + o.b, self.c + o.c, self.d + o.d)

    def __sub__(self, o: Mat2) -> Mat2:
        return Mat2(self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d)

    def __neg__(self) -> Mat2:
        return Mat2(-self.a, -self.b, -self.c, -self.d)

    def __matmul__(self, o: Mat2) -> Mat2:
        return Mat2(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )

    def scale(self, s: Any) -> Mat2:
        return Mat2(self.a * s, self.b * s, self.c * s, self.d * s)

    def det(self) -> Any:
        return self.a * self.d - self.b * self.c

    def trace(self) -> Any:
        return self.a + self.d

    def adjugate(self) -> Mat2:
        return Mat2(self.d, -self.b, -self.c, self.a)

    def inv(self) -> Mat2:
        return self.adjugate().scale(ONE / self.det())

    def map(self, fn: Callable[[Any], Any]) -> Mat2:
        return Mat2(fn(self.a), fn(self.b), fn(self.c), fn(self.d))

    def is_zero(self) -> bool:
        return not (self.a or self.b or self.c or self.d)

    def diagonal(self) -> Mat2:
        return Mat2(self.a, ZERO, ZERO, self.d)

    def off_diagonal(self) -> Mat2:
        return Mat2(ZERO, self.b, self.c, ZERO)


@dataclass(frozen=True, slots=True)
class MatSeries:
    """Series of 2x2 matrices in a local variable at ``base_point``.

    ``variable`` names the local coordinate: ``"x-t"`` at a finite point,
    ``"w"`` at infinity or ``"zeta"`` on a ramified double cover.
    """

    base_point: Any
    variable: str
    start_order: int
    coeffs: tuple[Mat2, ...]
    truncation_order: int

    def __post_init__(self) -> None:
        width = self.truncation_order - self.start_order + 1
        cs = tuple(self.coeffs[: max(width, 0)])
        if len(cs) < width:
            cs = cs + (Mat2.zero(),) * (width - len(cs))
        object.__setattr__(self, "coeffs", cs)

    @classmethod
    def from_entries(cls, base_point: Any, variable: str, entries: Sequence[Series]) -> MatSeries:
        """Assemble from four scalar series in row-major order."""
        start = min(s.start for s in entries)
        trunc = min(s.trunc for s in entries)
        coeffs = tuple(Mat2(*(s[k] for s in entries)) for k in range(start, trunc + 1))
        return cls(base_point, variable, start, coeffs, trunc)

    @classmethod
    def constant(cls, base_point: Any, variable: str, m: Mat2, trunc: int) -> MatSeries:
        return cls(base_point, variable, 0, (m,), trunc)

    def entries(self) -> tuple[Series, Series, Series, Series]:
        def pick(f: str) -> Series:
            return Series(self.start_order, tuple(getattr(m, f) for m in self.coeffs), self.truncation_order)

        return pick("a"), pick("b"), pick("c"), pick("d")

    def entry(self, i: int, j: int) -> Series:
        return self.entries()[2 * i + j]

    def __getitem__(self, k: int) -> Mat2:
        if k > self.truncation_order:
            raise TruncationError(
                f"matrix coefficient y^{k} requested, series known through y^{self.truncation_order}"
            )
        if k < self.start_order:
            return Mat2.zero()
        return self.coeffs[k - self.start_order]

    def _like(self, start: int, coeffs: Sequence[Mat2], trunc: int) -> MatSeries:
        return MatSeries(self.base_point, self.variable, start, tuple(coeffs), trunc)

    def __add__(self, o: MatSeries) -> MatSeries:
        start = min(self.start_order, o.start_order)
        trunc = min(self.truncation_order, o.truncation_order)
        return self._like(start, [self[k] + o[k] for k in range(start, trunc + 1)], trunc)

    def __neg__(self) -> MatSeries:
        return self._like(self.start_order, [-m for m in self.coeffs], self.truncation_order)

    def __sub__(self, o: MatSeries) -> MatSeries:
        return self + (-o)

    def __matmul__(self, o: MatSeries) -> MatSeries:
        start = self.start_order + o.start_order
        trunc = min(self.truncation_order + o.start_order, o.truncation_order + self.start_order)
        width = trunc - start + 1
        out = [Mat2.zero()] * max(width, 0)
        for i, mi in enumerate(self.coeffs[: max(width, 0)]):
            if mi.is_zero():
                continue
            for j, mj in enumerate(o.coeffs[: width - i]):
                out[i + j] = out[i + j] + mi @ mj
        return self._like(start, out, trunc)

    def scale(self, s: Any) -> MatSeries:
        return self._like(self.start_order, [m.scale(s) for m in self.coeffs], self.truncation_order)

    def mul_series(self, s: Series) -> MatSeries:
        a, b, c, d = self.entries()
        return MatSeries.from_entries(self.base_point, self.variable, [a * s, b * s, c * s, d * s])

    def left_const(self, m: Mat2) -> MatSeries:
        return self._like(self.start_order, [m @ x for x in self.coeffs], self.truncation_order)

    def right_const(self, m: Mat2) -> MatSeries:
        return self._like(self.start_order, [x @ m for x in self.coeffs], self.truncation_order)

    def trace(self) -> Series:
        return Series(self.start_order, tuple(m.trace() for m in self.coeffs), self.truncation_order)

    def det(self) -> Series:
        a, b, c, d = self.entries()
        return a * d - b * c

    def inverse(self) -> MatSeries:
        a, b, c, d = self.entries()
        inv_det = (a * d - b * c).inverse()
        return MatSeries.from_entries(self.base_point, self.variable, [d * inv_det, -b * inv_det, -c * inv_det, a * inv_det])

    def deriv(self) -> MatSeries:
        cs = [m.scale(self.start_order + i) for i, m in enumerate(self.coeffs)]
        return self._like(self.start_order - 1, cs, self.truncation_order - 1)

    def shift_order(self, k: int) -> MatSeries:
        return self._like(self.start_order + k, self.coeffs, self.truncation_order + k)

    def with_trunc(self, trunc: int) -> MatSeries:
        if trunc > self.truncation_order:
            raise TruncationError(f"cannot extend precision from {self.truncation_order} to {trunc}")
        return self._like(self.start_order, self.coeffs, trunc)

    def map(self, fn: Callable[[Any], Any]) -> MatSeries:
        return self._like(self.start_order, [m.map(fn) for m in self.coeffs], self.truncation_order)

    def values(self) -> MatSeries:
        return self.map(value_of)

    def derivs(self) -> MatSeries:
        return self.map(deriv_of)

    def residue(self) -> Mat2:
        return self[-1]

    def to_json(self) -> dict[str, Any]:
        return {
            "start_order": self.start_order,
            "truncation_order": self.truncation_order,
            "coeffs": [[[format_rational(value_of(e)) for e in row] for row in m.rows()] for m in self.coeffs],
        }


# ---------------------------------------------------------------------------
# rational functions


@dataclass(frozen=True, slots=True)
class RatFunc:
    """Reduced quotient ``num/den`` over ``Rational`` with monic denominator."""

    num: Poly
    den: Poly = field(default_factory=lambda: Poly.const(ONE))

    def __post_init__(self) -> None:
        num, den = self.num, self.den
        if den.is_zero():
            raise ZeroDivisionError("rational function with zero denominator")
        if num.is_zero():
            num, den = Poly(), Poly.const(ONE)
        else:
            g = num.gcd(den)
            if g.degree > 0:
                num, den = num // g, den // g
            lc = den.lead
            if lc != 1:
                num, den = num * (ONE / lc), den * (ONE / lc)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @classmethod
    def const(cls, c: Any) -> RatFunc:
        return cls(Poly.const(Rational(c)))

    @classmethod
    def lift(cls, other: Any) -> RatFunc:
        if isinstance(other, RatFunc):
            return other
        if isinstance(other, Poly):
            return cls(other)
        return cls.const(other)

    def __add__(self, other: Any) -> RatFunc:
        o = RatFunc.lift(other)
        return RatFunc(self.num * o.den + o.num * self.den, self.den * o.den)

    __radd__ = __add__

    def __neg__(self) -> RatFunc:
        return RatFunc(-self.num, self.den)

    def __sub__(self, other: Any) -> RatFunc:
        return self + (-RatFunc.lift(other))

    def __rsub__(self, other: Any) -> RatFunc:
        return RatFunc.lift(other) - self

    def __mul__(self, other: Any) -> RatFunc:
        o = RatFunc.lift(other)
        return RatFunc(self.num * o.num, self.den * o.den)

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> RatFunc:
        o = RatFunc.lift(other)
        if o.num.is_zero():
            raise ZeroDivisionError("division by the zero rational function")
        return RatFunc(self.num * o.den, self.den * o.num)

    def __rtruediv__(self, other: Any) -> RatFunc:
        return RatFunc.lift(other) / self

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (RatFunc, Poly, int, Rational, Fraction)):
            o = RatFunc.lift(other)
            return self.num == o.num and self.den == o.den
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.num, self.den))

    def __call__(self, x: Any) -> Any:
        return self.num(x) / self.den(x)

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_poly(self) -> bool:
        return self.den.degree == 0

    def deriv(self) -> RatFunc:
        return RatFunc(self.num.deriv() * self.den - self.num * self.den.deriv(), self.den * self.den)

    def to_json(self) -> dict[str, list[str]]:
        return {"num": self.num.to_json(), "den": self.den.to_json()}

    def __repr__(self) -> str:
        return f"RatFunc({self.num!r} / {self.den!r})"


def _expand_poly_quotient(num: Poly, den: Poly, point: Any, order_hi: int) -> Series:
    """Laurent expansion of ``num/den`` at a finite ``point`` or at ``INF`` (in w)."""
    if point is INF:
        dn, dd = num.degree, den.degree
        if dd < 0:
            raise Unexpandable("zero denominator")
        if dn < 0:
            return Series.zero(order_hi)
        rn, rd = num.reversed(dn), den.reversed(dd)
        shift = dd - dn
    else:
        rn, rd = num.shift(point), den.shift(point)
        shift = 0
    if rd.is_zero():
        raise Unexpandable("zero denominator")
    val = next(k for k, c in enumerate(rd.coeffs) if c)
    if not _is_unit(rd.coeffs[val]):
        raise Unexpandable("denominator has no invertible leading coefficient at the point")
    lo = shift - val
    rel = order_hi - lo
    if rel < 0:
        return Series.zero(order_hi)
    dser = Series(0, rd.coeffs[val:], rel)
    nser = Series(0, rn.coeffs, rel)
    return (nser * dser.inverse()).shift_order(lo).with_trunc(order_hi)


def laurent_expand(f: RatFunc | Poly, point: Any, order_hi: int) -> Series:
    """Exact Laurent coefficients of ``f`` at ``point`` (in ``w = 1/x`` at ``INF``).

    The result starts at the pole order and is known through ``order_hi``.
    """
    if isinstance(f, Poly):
        f = RatFunc(f)
    return _expand_poly_quotient(f.num, f.den, point, order_hi)


def residue_at(f: Any, point: Any) -> Any:
    """Residue of ``f dx`` (RatFunc) or the ``y**-1`` coefficient (series)."""
    if isinstance(f, (Series, MatSeries)):
        start = f.start if isinstance(f, Series) else f.start_order
        trunc = f.trunc if isinstance(f, Series) else f.truncation_order
        if trunc < -1:
            raise TruncationError("series does not reach the residue order")
        if start > -1:
            return ZERO if isinstance(f, Series) else Mat2.zero()
        return f[-1] if isinstance(f, Series) else f[-1]
    if isinstance(f, Poly):
        f = RatFunc(f)
    if not isinstance(f, RatFunc):
        raise Unexpandable(f"cannot take a residue of {type(f).__name__}")
    if point is INF:
        # f(x) dx = -f(1/w) w^-2 dw
        return -laurent_expand(f, INF, 1)[1]
    return laurent_expand(f, point, -1)[-1]


# ---------------------------------------------------------------------------
# exact linear algebra


@dataclass(frozen=True)
class LinearSolution:
    """A particular solution with rank and nullspace information."""

    solution: tuple[Rational, ...]
    rank: int
    nullspace: tuple[tuple[Rational, ...], ...]

    @property
    def nullspace_dim(self) -> int:
        return len(self.nullspace)

    @property
    def unique(self) -> bool:
        return not self.nullspace


def _integer_rows(rows: Sequence[Sequence[Rational]]) -> list[list[mpz]]:
    out = []
    for row in rows:
        vals = [Rational(v) for v in row]
        scale = math.lcm(*(int(v.denominator) for v in vals)) if vals else 1
        out.append([mpz(v * scale) for v in vals])
    return out


def solve_linear(A: Sequence[Sequence[Any]], b: Sequence[Any]) -> LinearSolution:
    """Solve ``A v = b`` exactly by Bareiss fraction-free elimination.

    Raises ``NoSolution`` (carrying the first inconsistent row) when the
    system is inconsistent; otherwise returns the solution with free
    variables set to zero, the rank and a nullspace basis.
    """
    m = len(A)
    k = len(A[0]) if m else 0
    if len(b) != m:
        raise ValueError("right-hand side length does not match row count")
    M = _integer_rows([list(A[i]) + [b[i]] for i in range(m)])
    pivots: list[int] = []
    r = 0
    prev = 1
    for col in range(k):
        piv = next((i for i in range(r, m) if M[i][col] != 0), None)
        if piv is None:
            continue
        M[r], M[piv] = M[piv], M[r]
        pr = M[r]
        for i in range(r + 1, m):
            row = M[i]
            f = row[col]
            if f == 0:
                for j in range(col, k + 1):
                    row[j] = row[j] * pr[col] // prev
                continue
            for j in range(col, k + 1):
                row[j] = (row[j] * pr[col] - f * pr[j]) // prev
        prev = pr[col]
        pivots.append(col)
        r += 1
        if r == m:
            break
    for i in range(r, m):
        if M[i][k] != 0:
            raise NoSolution(f"inconsistent system: row {i} reduces to 0 = {M[i][k]}", residual=(i, M[i][k]))
    rank = r

    def back(rhs_col: list[Rational], free_vals: dict[int, Rational]) -> list[Rational]:
        v = [Rational(0)] * k
        for c, val in free_vals.items():
            v[c] = val
        for i in range(rank - 1, -1, -1):
            c = pivots[i]
            acc = Rational(rhs_col[i])
            row = M[i]
            for j in range(c + 1, k):
                if row[j] and v[j]:
                    acc -= row[j] * v[j]
            v[c] = acc / row[c]
        return v

    sol = back([Rational(M[i][k]) for i in range(rank)], {})
    free = [c for c in range(k) if c not in set(pivots)]
    null = []
    for fcol in free:
        null.append(tuple(back([Rational(0)] * rank, {fcol: Rational(1)})))
    return LinearSolution(tuple(sol), rank, tuple(null))


# ---------------------------------------------------------------------------
# jets of parametrised constructions


@dataclass(frozen=True)
class Parametric:
    """An object given by a construction over named rational parameters.

    ``build`` receives a mapping from parameter names to scalars; lifting
    replaces one parameter by a jet so every rational operation inside the
    construction carries its exact derivative.
    """

    build: Callable[[Mapping[str, Any]], Any]
    params: Mapping[str, Rational]

    def value(self) -> Any:
        return self.build(dict(self.params))


def jet_lift(f: Parametric, direction: str | Mapping[str, Any]) -> Any:
    """Rebuild ``f`` over jets, differentiating along ``direction``.

    ``direction`` is a parameter name or a mapping from names to weights
    (a tangent vector).
    """
    weights = {direction: ONE} if isinstance(direction, str) else dict(direction)
    unknown = [d for d in weights if d not in f.params]
    if unknown:
        raise UnknownDirection(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    lifted = {
        name: Jet(Rational(v), Rational(weights.get(name, 0))) for name, v in f.params.items()
    }
    return f.build(lifted)
