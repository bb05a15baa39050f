"""Truncated formal reductions at singular and apparent points.

For a local matrix ``Omega = sum_k Omega_k y^(k-N) dy`` we build a constant
framing ``Phi`` and a series gauge ``Xi = I + X_1 y + X_2 y^2 + ...`` so that
``(Phi Xi)^-1 d(Phi Xi) + (Phi Xi)^-1 Omega (Phi Xi)`` is

* diagonal at an unramified (or regular) point, with ``Xi`` off-diagonal;
* of the shape ``[[alpha, beta], [y beta, alpha - dy/(2y)]]`` at a ramified
  point, which ``y = zeta^2`` and ``M = [[1, 1], [zeta, -zeta]]`` diagonalise;
* ``diag(0, -1) dy / y`` at an apparent point.

All recursions are generic over the scalar ring, so they run unchanged on
jets to produce exact first variations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

from .connection import Bundle, Connection, Kind, SingularPoint
from .errors import InternalInconsistency, KindMismatch, NotApparent, TruncationError
from .exactalg import INF, ONE, ZERO, Mat2, MatSeries, Rational, value_of

__all__ = [
    "CompatibleFraming",
    "LocalReduction",
    "ApparentSolution",
    "FreeEntries",
    "ZERO_FREE",
    "framing_unramified",
    "framing_ramified",
    "reduce_unramified",
    "reduce_ramified",
    "reduce_point",
    "apparent_solution",
    "gauge_transform",
    "scalar_unit_free_entries",
]

HALF = Rational(1, 2)

# free gauge entries (x11, x12) at order k of a ramified reduction
FreeEntries = Callable[[int], tuple[Any, Any]]


def ZERO_FREE(k: int) -> tuple[Any, Any]:
    return ZERO, ZERO


def scalar_unit_free_entries(k: int) -> tuple[Any, Any]:
    """Scalar part ``x11 = 1`` through order 3, zero afterwards.

    Differs from ``ZERO_FREE`` by a scalar gauge ``f(y) I``, which adds
    ``d log f`` to both diagonal entries: odd ``theta`` are unchanged and
    even ones move by constants, so Hamiltonians shift by constants and
    their differentials agree. The reduced coefficients come out in the
    normalization used by the Kimura ``H(9/2)`` comparison.
    """
    return (ONE if k <= 3 else ZERO), ZERO


@dataclass(frozen=True)
class CompatibleFraming:
    label: str
    Phi: Mat2


@dataclass(frozen=True)
class LocalReduction:
    """Result of a formal reduction at one point.

    ``reduced`` holds the coefficients ``B_k`` of the reduced matrix at
    ``y^(k-N)`` for ``k = 0..order``; ``theta`` lists the diagonal data:
    ``(theta+_l, theta-_l)`` pairs for unramified points, the ``zeta``
    coefficients ``theta_l'`` for ramified ones.
    """

    label: str
    kind: Kind
    pole_order: int
    framing: CompatibleFraming
    Xi: MatSeries
    reduced: tuple[Mat2, ...]
    theta: tuple[Any, ...]
    order: int

    @property
    def theta_tail(self) -> tuple[Any, ...]:
        N = self.pole_order
        if self.kind is Kind.RAMIFIED:
            return self.theta[2 * N - 1 :]
        return self.theta[N:]

    def gauge(self) -> MatSeries:
        """``Phi Xi`` as a matrix series."""
        return self.Xi.left_const(self.framing.Phi)

    def theta_plus(self, l: int) -> Any:
        return self.theta[l][0]

    def theta_minus(self, l: int) -> Any:
        return self.theta[l][1]


@dataclass(frozen=True)
class ApparentSolution:
    """``Psi = Phi Xi diag(1, y)`` at an apparent point ``q_j``."""

    label: str
    Phi: Mat2
    Xi: MatSeries
    order: int

    def gauge(self) -> MatSeries:
        return self.Xi.left_const(self.Phi)


def gauge_transform(omega: MatSeries, g: MatSeries) -> MatSeries:
    """``g^-1 dg + g^-1 omega g`` for a gauge holomorphic and invertible at the point."""
    ginv = g.inverse()
    return ginv @ g.deriv() + ginv @ omega @ g


def _point_of(conn: Connection, label: str) -> SingularPoint:
    return conn.sing.point(label)


def _local(conn: Connection, label: str, order_hi: int) -> MatSeries:
    pt = _point_of(conn, label)
    om = conn.expand(label if not pt.is_infinite else INF, order_hi)
    if om.start_order < -pt.order:
        for k in range(om.start_order, -pt.order):
            if not om[k].is_zero():
                raise KindMismatch(f"pole order at {label} exceeds the declared {pt.order}")
        om = MatSeries(om.base_point, om.variable, -pt.order, om.coeffs[-pt.order - om.start_order :], om.truncation_order)
    return om


def _coeffs(om: MatSeries, N: int, K: int) -> list[Mat2]:
    """``A_k`` = coefficient of ``y^(k-N)`` for ``k = 0..K``."""
    if om.truncation_order < K - N:
        raise TruncationError(f"local matrix known through order {om.truncation_order}, need {K - N}")
    return [om[k - N] for k in range(K + 1)]


# ---------------------------------------------------------------------------
# unramified


def _eigvec_first(L: Mat2, lam: Any) -> tuple[Any, Any]:
    """Eigenvector with first entry 1 if possible, else second entry 1."""
    if L.b:
        return ONE, (lam - L.a) / L.b
    if lam - L.a:
        return ZERO, ONE
    # lam == L.a with b == 0: use the second row relation
    if L.c:
        return ONE, L.c / (lam - L.d) if lam - L.d else ZERO
    return ONE, ZERO


def _eigvec_second(L: Mat2, lam: Any) -> tuple[Any, Any]:
    """Eigenvector with second entry 1 if possible, else first entry 1."""
    v1, v2 = _eigvec_first(L, lam)
    if v2:
        return v1 / v2, ONE
    return ONE, ZERO


def framing_from_leading(L: Mat2, theta_plus: Any, theta_minus: Any, label: str = "") -> CompatibleFraming:
    if value_of(theta_plus) == value_of(theta_minus):
        raise KindMismatch(f"point {label}: equal leading exponents, leading matrix is not semisimple with distinct eigenvalues")
    tr, det = L.trace(), L.det()
    if tr != theta_plus + theta_minus or det != theta_plus * theta_minus:
        raise KindMismatch(f"point {label}: leading matrix eigenvalues differ from the declared theta_0")
    a1, a2 = _eigvec_first(L, theta_plus)
    b1, b2 = _eigvec_second(L, theta_minus)
    Phi = Mat2(a1, b1, a2, b2)
    if not value_of(Phi.det()):
        raise KindMismatch(f"point {label}: eigenvectors are not independent")
    return CompatibleFraming(label, Phi)


def framing_unramified(conn: Connection, label: str) -> CompatibleFraming:
    """Columns are eigenvectors for ``(theta+_0, theta-_0)``.

    The first column has first entry 1 and the second column has second
    entry 1 (falling back to the other entry when that one vanishes).
    """
    pt = _point_of(conn, label)
    if pt.kind is Kind.RAMIFIED:
        raise KindMismatch(f"point {label} is declared ramified")
    L = _local(conn, label, -pt.order)[-pt.order]
    return framing_from_leading(L, pt.theta_plus[0], pt.theta_minus[0], label)


def reduce_series_unramified(A: Sequence[Mat2], N: int, K: int) -> tuple[list[Mat2], list[Mat2]]:
    """Diagonalising recursion for framed coefficients ``A_0..A_K``.

    Returns ``(X, B)`` with ``X[0] = I`` and zero-diagonal ``X[s]``, and
    diagonal ``B[k]``.
    """
    A0 = A[0]
    if A0.b or A0.c:
        raise InternalInconsistency("framed leading coefficient is not diagonal")
    tp, tm = A0.a, A0.d
    gap = tp - tm
    X: list[Mat2] = [Mat2.identity()]
    B: list[Mat2] = [A0]
    for k in range(1, K + 1):
        R = A[k]
        for s in range(1, k):
            R = R + A[k - s] @ X[s] - X[s] @ B[k - s]
        j = k - N + 1
        if N >= 2 and j >= 1:
            R = R + X[j].scale(j)
        shift = k if N == 1 else 0
        x12 = -R.b / (gap + shift)
        x21 = R.c / (gap - shift)
        X.append(Mat2(ZERO, x12, x21, ZERO))
        B.append(R.diagonal())
    return X, B


def reduce_unramified(conn: Connection, label: str, order: int | None = None) -> LocalReduction:
    """Formal diagonalisation at a regular or unramified point through ``order``."""
    pt = _point_of(conn, label)
    N = pt.order
    K = 2 * N - 1 if order is None else order
    fr = framing_unramified(conn, label)
    om = _local(conn, label, K - N)
    Phi_inv = fr.Phi.inv()
    A = [Phi_inv @ m @ fr.Phi for m in _coeffs(om, N, K)]
    X, B = reduce_series_unramified(A, N, K)
    xi = MatSeries(om.base_point, om.variable, 0, tuple(X), K)
    theta = tuple((b.a, b.d) for b in B)
    return LocalReduction(label, pt.kind, N, fr, xi, tuple(B), theta, K)


# ---------------------------------------------------------------------------
# ramified


def framing_from_jordan(L: Mat2, theta0: Any, theta1: Any, label: str = "") -> CompatibleFraming:
    disc = (L.a - L.d) * (L.a - L.d) + 4 * L.b * L.c
    if disc or (not L.b and not L.c):
        raise KindMismatch(f"point {label}: leading matrix is not a non-trivial Jordan block")
    if L.trace() != theta0:
        raise KindMismatch(f"point {label}: leading trace differs from theta_0")
    lam = theta0 / 2
    if not L.a and L.b:
        pi = ONE / L.b
        h = theta0 * pi / 2
        Phi = Mat2(ONE, h, h, (theta0 * theta0 * pi / 4 + theta1 / 2) * pi)
    elif L.b:
        Phi = Mat2(L.b, ZERO, lam - L.a, theta1 / 2)
    else:
        # L = [[lam, 0], [c, lam]]: swap the basis
        Phi = Mat2(ZERO, theta1 / (2 * L.c), ONE, ZERO)
    target = Mat2(theta0 / 2, theta1 / 2, ZERO, theta0 / 2)
    if Phi.inv() @ L @ Phi != target:
        raise KindMismatch(f"point {label}: framing does not reach the upper-triangular leading form")
    return CompatibleFraming(label, Phi)


def framing_ramified(conn: Connection, label: str) -> CompatibleFraming:
    """Framing conjugating the leading term to ``[[theta0/2, theta1/2], [0, theta0/2]]``."""
    pt = _point_of(conn, label)
    if pt.kind is not Kind.RAMIFIED:
        raise KindMismatch(f"point {label} is not declared ramified")
    L = _local(conn, label, -pt.order)[-pt.order]
    return framing_from_jordan(L, pt.theta[0], pt.theta[1], label)


def reduce_series_ramified(
    A: Sequence[Mat2], N: int, K: int, free: FreeEntries = ZERO_FREE
) -> tuple[list[Mat2], list[Mat2]]:
    """Shape-normalising recursion for framed coefficients ``A_0..A_(K+1)``.

    The target has ``B_k = [[a_k, b_k], [b_(k-1), a_k - [k = N-1]/2]]``.
    At each order the entries ``x11`` and ``x12`` of ``X_k`` are free and
    taken from ``free(k)``; ``x22 - x11`` and ``b_k`` are fixed one order
    later by the (2,1) equation, so ``A`` must reach ``K + 1``.
    """
    if len(A) < K + 2:
        raise TruncationError(f"ramified recursion needs {K + 2} coefficients, got {len(A)}")
    A0 = A[0]
    if A0.c or A0.a != A0.d:
        raise InternalInconsistency("framed leading coefficient is not upper triangular with equal diagonal")
    half_t1 = A0.b
    X: list[Mat2] = [Mat2.identity()]
    B: list[Mat2] = [A0]
    pending_R12: Any = None

    def residual(k: int, Xs: Sequence[Mat2], Bs: Sequence[Mat2]) -> Mat2:
        R = A[k]
        for s in range(1, k):
            R = R + A[k - s] @ Xs[s] - Xs[s] @ Bs[k - s]
        j = k - N + 1
        if j >= 1:
            R = R + Xs[j].scale(j)
        return R

    for k in range(1, K + 2):
        b_prev = B[k - 1].b
        if k >= 2:
            # the pending difference d = x22 - x11 of X_(k-1) fixes b_(k-1) = half_t1 d + R12
            def trial(d: Any) -> tuple[list[Mat2], list[Mat2], Any]:
                Xp = X[k - 1]
                Xk = X[:-1] + [Mat2(Xp.a, Xp.b, Xp.c, Xp.a + d)]
                bk = half_t1 * d + pending_R12
                Bp = B[k - 1]
                Bk = B[:-1] + [Mat2(Bp.a, bk, Bp.c, Bp.d)]
                r = residual(k, Xk, Bk)
                return Xk, Bk, r.c - bk

            _, _, f0 = trial(ZERO)
            _, _, f1 = trial(ONE)
            slope = f1 - f0
            if not value_of(slope):
                raise InternalInconsistency(f"ramified recursion is singular at order {k}")
            d = -f0 / slope
            X, B, check = trial(d)
            if check:
                raise InternalInconsistency(f"ramified recursion residual at order {k}")
            b_prev = B[k - 1].b
        if k == K + 1:
            break
        R = residual(k, X, B)
        if k == 1 and R.c != b_prev:
            raise KindMismatch("ramified data inconsistent: first subleading (2,1) entry differs from theta_1/2")
        delta = HALF if k == N - 1 else ZERO
        a_k = (R.a + R.d + delta) / 2
        x21 = 2 * (a_k - R.a) / (2 * half_t1)
        x11, x12 = free(k)
        pending_R12 = R.b
        X.append(Mat2(x11, x12, x21, x11))
        B.append(Mat2(a_k, R.b, b_prev, a_k - delta))
    return X[: K + 1], B[: K + 1]


def ramified_theta(B: Sequence[Mat2]) -> tuple[Any, ...]:
    """``theta_(2k) = 2 a_k`` and ``theta_(2k+1) = 2 b_k`` from the shape coefficients."""
    out: list[Any] = []
    for m in B:
        out.append(2 * m.a)
        out.append(2 * m.b)
    return tuple(out)


def reduce_ramified(
    conn: Connection, label: str, order: int | None = None, free: FreeEntries = ZERO_FREE
) -> LocalReduction:
    """Shape normalisation at a ramified point, read off on the double cover."""
    pt = _point_of(conn, label)
    N = pt.order
    K = 2 * N - 1 if order is None else order
    fr = framing_ramified(conn, label)
    om = _local(conn, label, K + 1 - N)
    Phi_inv = fr.Phi.inv()
    A = [Phi_inv @ m @ fr.Phi for m in _coeffs(om, N, K + 1)]
    X, B = reduce_series_ramified(A, N, K, free)
    xi = MatSeries(om.base_point, om.variable, 0, tuple(X), K)
    return LocalReduction(label, pt.kind, N, fr, xi, tuple(B), ramified_theta(B), K)


def reduce_point(conn: Connection, label: str, order: int | None = None, free: FreeEntries = ZERO_FREE) -> LocalReduction:
    pt = _point_of(conn, label)
    if pt.kind is Kind.RAMIFIED:
        return reduce_ramified(conn, label, order, free)
    return reduce_unramified(conn, label, order)


# ---------------------------------------------------------------------------
# apparent points


def apparent_series(A: Sequence[Mat2], K: int, free21: Any = ZERO) -> list[Mat2]:
    """Holomorphic gauge reducing ``A_0/y + A_1 + ...`` with ``A_0 = diag(0, -1)`` to ``A_0/y``."""
    X: list[Mat2] = [Mat2.identity()]
    for k in range(1, K + 1):
        R = A[k]
        for s in range(1, k):
            R = R + A[k - s] @ X[s]
        if k == 1:
            if R.c:
                raise NotApparent("logarithmic obstruction: the (2,1) condition fails at first order")
            x21 = free21
        else:
            x21 = -R.c / (k - 1)
        X.append(Mat2(-R.a / k, -R.b / (k + 1), x21, -R.d / k))
    return X


def apparent_solution(conn: Connection, j: int, order: int = 3) -> ApparentSolution:
    """Local solution data at the apparent point ``q_(j+1)`` of the normal form."""
    if conn.bundle is not Bundle.EN2:
        raise ValueError("apparent solutions are taken on the normal form")
    label = f"q{j + 1}"
    d = conn.darboux[j]
    Phi = Mat2(ONE, ZERO, d.p, ONE)
    om = conn.expand(label, order - 1)
    Phi_inv = Phi.inv()
    A = [Phi_inv @ om[k - 1] @ Phi for k in range(order + 1)]
    if A[0] != Mat2.diag(ZERO, -ONE):
        raise NotApparent(f"residue at {label} does not have exponents 0 and -1 in the expected frame")
    X = apparent_series(A, order)
    return ApparentSolution(label, Phi, MatSeries(label, "x-t", 0, tuple(X), order), order)
