"""Exception types raised by the library."""


class PinningError(Exception):
    """Base class for all library errors."""


class NonSummable(PinningError):
    pass


class CutoffTooSmall(PinningError):
    pass


class InfeasibleMass(PinningError):
    pass


class UnsupportedCase(PinningError):
    pass


class Undecidable(PinningError):
    pass


class DivergentSeries(PinningError):
    pass


class DivergentDenominator(DivergentSeries):
    pass


class NegativeProbability(PinningError):
    pass


class BudgetExceeded(PinningError):
    pass


class BudgetExhausted(BudgetExceeded):
    """Search ran out of evaluations; ``best`` holds the lowest certificate seen."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ImpossibleEvent(PinningError):
    pass


class EmptyWindow(PinningError):
    pass


class InsufficientPoints(PinningError):
    pass


class NonPositiveValue(PinningError):
    pass
