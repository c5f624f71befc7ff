"""Exception types raised across the package."""


class SwitchSdeError(Exception):
    """Base class for all errors raised by switchsde."""


class NegativeOffDiagonal(SwitchSdeError):
    """A transition-rate matrix has a negative off-diagonal entry."""


class RowSumNonzero(SwitchSdeError):
    """A transition-rate matrix row does not sum to zero within tolerance."""


class NotIrreducible(SwitchSdeError):
    """The positive-rate digraph of the rate matrix is not strongly connected."""


class SingularSystem(SwitchSdeError):
    """Linear solve for the stationary distribution broke down numerically."""


class AbsorbingState(SwitchSdeError):
    """Chain simulation reached a state with zero exit rate."""


class DomainViolation(SwitchSdeError):
    """Arguments are outside the domain where the operation is defined."""


class OutOfHorizon(SwitchSdeError):
    """A time query lies beyond the simulated horizon of a path."""


class OutOfDomain(SwitchSdeError):
    """A segment evaluation point lies outside the stored window."""


class NonFiniteValue(SwitchSdeError):
    """A NaN or infinity appeared where a finite value is required."""


class ShapeMismatch(SwitchSdeError):
    """Two segments do not share (dim, tau, delta)."""


class SizeMismatch(SwitchSdeError):
    """Two sample sets do not have matching sizes."""


class InsufficientData(SwitchSdeError):
    """Too few usable points remain for a rate fit."""


class NonPositiveMeans(SwitchSdeError):
    """A decay series has nonpositive means inside the fit window."""


class ZeroSeparation(SwitchSdeError):
    """A coupled run was requested from identical initial data."""


class ConfigError(SwitchSdeError):
    """Invalid run configuration; the message carries the offending field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
