"""Exception hierarchy.

Every error raised by the package derives from :class:`DampedEulerError`;
input-validation errors additionally derive from :class:`ValueError`.
"""


class DampedEulerError(Exception):
    pass


class NotSorted(DampedEulerError, ValueError):
    pass


class NonFinite(DampedEulerError, ValueError):
    pass


class GridMismatch(DampedEulerError, ValueError):
    pass


class LengthMismatch(DampedEulerError, ValueError):
    pass


class DegenerateDensity(DampedEulerError):
    """Two adjacent quantile nodes coincide while a pressure law is active."""


class Inadmissible(DampedEulerError, ValueError):
    """The confinement/interaction convexity constants fail the admissibility condition."""


class PressureNotSupported(DampedEulerError, ValueError):
    pass


class ShockFormed(DampedEulerError):
    """The smooth solver detected loss of strict monotonicity.

    ``trace`` holds the rows recorded before the failure (may be ``None``
    when raised from a single step).
    """

    def __init__(self, message, trace=None, time=None):
        super().__init__(message)
        self.trace = trace
        self.time = time


class MonotonicityLost(ShockFormed):
    """The quantile gradient flow left the cone of nondecreasing maps."""


class CadenceMismatch(DampedEulerError, ValueError):
    pass


class MissingColumn(DampedEulerError, KeyError):
    pass


class NonPositiveData(DampedEulerError, ValueError):
    pass


class NotWellPrepared(DampedEulerError, ValueError):
    pass


class StiffnessBudget(DampedEulerError, ValueError):
    pass


class NonConvergent(DampedEulerError):
    pass


class ConfigError(DampedEulerError, ValueError):
    """Scenario configuration is invalid; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
