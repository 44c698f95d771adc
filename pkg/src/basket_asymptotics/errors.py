"""Exception types raised by the library."""


class DefinitenessError(ValueError):
    """A correlation matrix is not (numerically) positive definite."""

    def __init__(self, message, minor=None):
        super().__init__(message)
        self.minor = minor


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class PreconditionError(ValueError):
    """An operation was called on an input it is not defined for."""


class BracketError(ValueError):
    """A root bracket does not enclose a sign change."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed; ``best_residual`` holds the smallest defect seen."""

    def __init__(self, message, best_residual=float("nan")):
        super().__init__(message)
        self.best_residual = best_residual


class StiffnessError(RuntimeError):
    """The adaptive integrator could not make progress."""

    def __init__(self, message, last_time=float("nan")):
        super().__init__(message)
        self.last_time = last_time


class AccuracyError(RuntimeError):
    """Quadrature did not reach the requested accuracy."""

    def __init__(self, message, estimate=float("nan")):
        super().__init__(message)
        self.estimate = estimate
