"""Exception types raised across the package."""


class FragtreeError(Exception):
    """Base class for all package errors."""


# input validation
class NegativeEntry(FragtreeError, ValueError):
    pass


class SumExceedsOne(FragtreeError, ValueError):
    pass


class EntryAboveOne(FragtreeError, ValueError):
    pass


class LabelOutOfRange(FragtreeError, ValueError):
    pass


class SizeMismatch(FragtreeError, ValueError):
    pass


class ForbiddenAtom(FragtreeError, ValueError):
    pass


class DegenerateParameters(FragtreeError, ValueError):
    pass


class NonNegativeAlpha(FragtreeError, ValueError):
    pass


class InvalidPreCutset(FragtreeError, ValueError):
    pass


class NotNested(FragtreeError, ValueError):
    pass


class PointNotInTree(FragtreeError, ValueError):
    pass


class InfiniteSupport(FragtreeError, ValueError):
    pass


class DegenerateScales(FragtreeError, ValueError):
    pass


# numerical certification
class DivergentIntegral(FragtreeError, ArithmeticError):
    pass


class InconclusiveTail(FragtreeError, ArithmeticError):
    pass


class NoTailBound(FragtreeError, ArithmeticError):
    pass


class ZeroRate(FragtreeError, ArithmeticError):
    pass


class ZeroSpineRate(FragtreeError, ArithmeticError):
    pass


class NoMalthusianExponent(FragtreeError, ArithmeticError):
    """Raised when psi has no root in (0, 1]; `report` holds the partial analysis."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# simulation
class HorizonRequired(FragtreeError, ValueError):
    pass


class HorizonExhausted(FragtreeError, RuntimeError):
    pass


class InfiniteDeathTime(FragtreeError, ValueError):
    def __init__(self, message, labels=()):
        super().__init__(message)
        self.labels = tuple(labels)


class ExtinctionOnly(FragtreeError, RuntimeError):
    pass
