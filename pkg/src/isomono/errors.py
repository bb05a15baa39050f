"""Exception hierarchy shared by every module."""

from __future__ import annotations


class IsomonoError(Exception):
    """Base class for all library errors."""


class Unexpandable(IsomonoError):
    """A function cannot be expanded at the requested point."""


class TruncationError(IsomonoError):
    """A series was asked for a coefficient beyond its known precision."""


class NoSolution(IsomonoError):
    """An exact linear system is inconsistent."""

    def __init__(self, message: str, residual: object = None) -> None:
        super().__init__(message)
        self.residual = residual


class UnknownDirection(IsomonoError):
    """A derivative was requested along a parameter the object does not depend on."""


class InvalidInstance(IsomonoError):
    """Input data violates a structural invariant."""


class DegenerateConfiguration(InvalidInstance):
    """The apparent-point conditions do not determine the polynomial part."""


class PoleCollision(InvalidInstance):
    """An apparent point coincides with a singular point or another apparent point."""


class NonGenericApparentDivisor(IsomonoError):
    """The (1,2) numerator has repeated, irrational or misplaced roots."""


class InvariantSubbundle(IsomonoError):
    """The (1,2) entry vanishes identically, so O(1) is invariant."""


class InternalInconsistency(IsomonoError):
    """An identity that must hold by construction failed."""


class KindMismatch(IsomonoError):
    """A point's leading coefficient does not match its declared kind."""


class NotApparent(IsomonoError):
    """A declared apparent point carries a logarithmic obstruction."""


class BadIndex(IsomonoError):
    """A Hamiltonian index lies outside its admissible range."""


class NotADeformationDirection(IsomonoError):
    """The requested direction moves a frozen parameter."""


class FlowSingular(IsomonoError):
    """The numerical flow approached a collision of apparent and singular points."""

    def __init__(self, message: str, step: int) -> None:
        super().__init__(message)
        self.step = step


class IntegrationFailure(IsomonoError):
    """The adaptive integrator could not meet its tolerance."""
