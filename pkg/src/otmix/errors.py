"""Exception hierarchy shared by all otmix modules."""


class OtmixError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(OtmixError, ValueError):
    """An input violates a documented invariant or precondition."""


class SizeError(ValidationError):
    """A requested size is out of range (too many samples, instance too large)."""


class EmptySampleError(OtmixError):
    """A sampling protocol produced zero points."""


class InsufficientDataError(OtmixError):
    """A composition asks a source for more points than it holds."""

    def __init__(self, message: str, source_index: int | None = None):
        super().__init__(message)
        self.source_index = source_index


class ModeError(ValidationError):
    """Labeled/unlabeled mode mismatch for the requested operation."""


class DimensionMismatchError(ValidationError):
    """Vector or matrix dimensions do not line up."""


class ConvergenceError(OtmixError):
    """An iterative solver failed to converge; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class NumericError(OtmixError):
    """A numerical failure (NaN, overflow, violated optimality check)."""


class DegeneracyError(OtmixError):
    """A formula was evaluated at a point where it is undefined."""


class RankDeficiencyError(OtmixError):
    """A fitting design has no unique solution and the fit declines to guess."""


class FitFailureError(OtmixError):
    """All attempts to fit a model diverged; carries per-start residuals."""

    def __init__(self, message: str, residual_trace: tuple[float, ...] = ()):
        super().__init__(message)
        self.residual_trace = residual_trace


class FeasibilityError(OtmixError):
    """No feasible composition exists for the requested optimization."""


class UnreachableTargetError(OtmixError):
    """No searched budget reaches the target performance."""

    def __init__(self, message: str, best_budget: int, best_performance: float):
        super().__init__(message)
        self.best_budget = best_budget
        self.best_performance = best_performance


class SplitError(OtmixError):
    """A train/test split came out empty on one side."""
