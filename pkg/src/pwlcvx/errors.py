"""Exception types raised across the package."""


class ValidationError(ValueError):
    """Input failed a shape, domain or finiteness check."""


class IllConditionedError(ValueError):
    """A numerical decomposition could not be certified to tolerance."""


class SolverError(RuntimeError):
    """The conic solver did not return a usable optimal point."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class SearchFailure(RuntimeError):
    """The lower-bound search aborted; ``trace`` holds what was collected."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
