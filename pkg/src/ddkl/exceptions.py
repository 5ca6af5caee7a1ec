"""Exception types shared across the package."""


class IllConditionedError(ValueError):
    """Raised when a linear system is too ill-conditioned to solve reliably.

    Carries the magnitude of the offending pivot in ``pivot`` and the
    threshold it failed in ``threshold``.
    """

    def __init__(self, message, pivot, threshold):
        super().__init__(message)
        self.pivot = float(pivot)
        self.threshold = float(threshold)


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver exhausts its iteration budget.

    ``residuals`` holds the residual history up to the failure point.
    """

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = list(residuals)

    @property
    def final_residual(self):
        return self.residuals[-1] if self.residuals else float("nan")
