"""Exception hierarchy shared by every cookiewalk module."""


class CookieWalkError(Exception):
    """Base class for all library errors."""


class OutOfRange(CookieWalkError, ValueError):
    pass


class EmptyCookieList(CookieWalkError, ValueError):
    pass


class UndefinedForZeroQ(CookieWalkError, ValueError):
    pass


class InternalError(CookieWalkError, RuntimeError):
    """A numerical invariant that should hold by construction was violated."""


class AllocationLimit(CookieWalkError, MemoryError):
    pass


class NonConvergence(CookieWalkError, RuntimeError):
    pass


class BudgetExceeded(CookieWalkError, RuntimeError):
    """Truncation budget exhausted; ``spectrum`` holds the partial result."""

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


class DivergentTestVector(CookieWalkError, ValueError):
    pass


class Inconclusive(CookieWalkError, RuntimeError):
    pass


class NoSignChange(CookieWalkError, ValueError):
    pass


class NonMonotoneSamples(CookieWalkError, ValueError):
    pass


class NotComparable(CookieWalkError, ValueError):
    pass


class ArenaLimit(CookieWalkError, MemoryError):
    pass


class UndecidedReplicas(CookieWalkError, RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InsufficientTail(CookieWalkError, ValueError):
    pass
