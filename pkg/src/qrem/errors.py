"""Exception hierarchy shared by all modules."""


class QremError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(QremError, ValueError):
    """Invalid parameters or configuration."""


class CapacityError(QremError):
    """Requested size exceeds a configured memory or size cap."""


class ConvergenceError(QremError):
    """An iterative solver stopped without meeting its tolerance.

    ``result`` carries the best available partial answer, if any.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class BracketError(QremError):
    """A minimum search could not be bracketed."""


class NormDriftError(QremError):
    """Time evolution lost unitarity beyond the allowed tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
