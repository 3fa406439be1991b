"""Exception types shared across the package."""


class MewlsError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MewlsError, ValueError):
    """Invalid spline or solver configuration."""


class InvalidInputError(MewlsError, ValueError):
    """Malformed data passed to an operation (shape, emptiness, sign)."""


class DomainError(MewlsError, ValueError):
    """Evaluation point outside the admissible parameter domain."""


class SingularSystemError(MewlsError):
    """The weighted normal system is numerically rank deficient.

    Carries the estimated rank so callers can report how many basis
    functions lost data support.
    """

    def __init__(self, message, rank=None, size=None):
        super().__init__(message)
        self.rank = rank
        self.size = size


class DegenerateResidualsError(MewlsError):
    """All squared residuals coincide, so the multiplier equation has no
    isolated root (the local-solvability hypothesis fails)."""


class InfeasibleTargetError(MewlsError):
    """Requested mean-squared-error target lies outside the reachable range
    (min of the squared residuals, max of the squared residuals)."""


class IterationError(MewlsError):
    """An iterative solver exhausted its budget without converging.

    ``last_state`` and ``report`` hold whatever diagnostics were available
    when the failure was detected.
    """

    def __init__(self, message, last_state=None, report=None):
        super().__init__(message)
        self.last_state = last_state
        self.report = report
