"""Exception types raised by htcp."""


class HTCPError(Exception):
    """Base class for computational errors (CLI exit status 1)."""


class GridError(HTCPError, ValueError):
    """Malformed grid, mismatched steps, or a broken density definition."""


class SeriesTruncationError(HTCPError):
    """A compound series needed more terms than the hard cap allows."""

    def __init__(self, message, *, cap, needed_weight=None):
        super().__init__(message)
        self.cap = cap
        self.needed_weight = needed_weight


class WindowError(HTCPError, ValueError):
    """A tail window does not fit the grid or is too deep to resolve."""


class SupportOverflowError(HTCPError):
    """Mass escaped the support of a two-sided grid beyond the allowed bound."""


class SpitzerConvergenceError(HTCPError):
    """Late Spitzer terms are not decreasing; the grid is too coarse."""


class PathLengthError(HTCPError):
    """A Monte Carlo path exceeded the step cap before hitting the barrier."""
