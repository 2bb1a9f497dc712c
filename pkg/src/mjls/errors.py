"""Exception hierarchy shared by all analysis modules."""


class MjlsError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(MjlsError, ValueError):
    """Invalid grid, kernel, field or system data."""


class BudgetError(MjlsError):
    """A dense representation would exceed the configured size budget."""


class ConvergenceError(MjlsError):
    """An iterative solver ran out of iterations.

    ``report`` carries the diagnostics gathered up to the failure.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class UnstableError(MjlsError):
    """The requested computation needs a mean-square stable system."""

    def __init__(self, message, spectral_radius=None):
        super().__init__(message)
        self.spectral_radius = spectral_radius


class SignConditionError(MjlsError):
    """The disturbance block of the Riccati map is not negative definite.

    Attributes
    ----------
    step : int or None
        Time index of the failing iterate (``None`` for stationary checks).
    node : int
        Flat grid node index where the largest eigenvalue was found.
    max_eigenvalue : float
        Largest eigenvalue of the block at that node.
    """

    def __init__(self, message, step=None, node=None, max_eigenvalue=None):
        super().__init__(message)
        self.step = step
        self.node = node
        self.max_eigenvalue = max_eigenvalue


class PremiseError(MjlsError, ValueError):
    """Inputs violate the premise of a search procedure (e.g. bisection bracket)."""
