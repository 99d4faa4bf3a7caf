"""Exception types shared across the package."""


class DomainError(ValueError):
    """A point lies outside the domain of a potential."""


class NumericalFailure(RuntimeError):
    """An iterative solver did not reach its tolerance.

    ``gap`` holds the last duality gap (or residual) the solver saw, and
    ``step`` the online round that failed when raised from a run loop.
    """

    def __init__(self, message: str, gap: float = float("nan"), step: int | None = None):
        super().__init__(message)
        self.gap = gap
        self.step = step


class UnsupportedLossError(NotImplementedError):
    """Raised for operations that only make sense for linear losses."""
