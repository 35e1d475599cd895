"""Exception hierarchy shared by all modules."""


class BesselHarmError(Exception):
    """Base class for all library errors."""


class DomainError(BesselHarmError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ParameterError(BesselHarmError, ValueError):
    """An operator parameter combination is not admissible."""


class UsageError(BesselHarmError, ValueError):
    """Objects that must match (grids, lengths) do not."""


class SingularityError(BesselHarmError, ValueError):
    """A kernel was requested on the diagonal x = y."""


class AccuracyError(BesselHarmError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance.

    ``estimate`` carries the best value obtained, ``error`` the achieved
    error indicator.
    """

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class PlanQualityError(AccuracyError):
    """A transform plan failed its involution certificate."""
