"""Exception types shared across the package."""


class UsageError(ValueError):
    """An argument violates an operation's precondition."""


class AdmissibilityError(UsageError):
    """Spectral parameters outside the admissible region (epsilon >= 4)."""


class DivergenceError(ArithmeticError):
    """A path functional has no finite value (e.g. a constant path)."""


class StabilityError(RuntimeError):
    """A time step violates the solver's stability bound."""

    def __init__(self, message, bound):
        super().__init__(message)
        self.bound = bound


class InconclusiveError(RuntimeError):
    """A numerical check is dominated by Monte Carlo noise."""
