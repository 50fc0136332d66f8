"""Exception types raised across the package.

All of them derive from ``ValueError`` so callers that only care about
"bad input" can catch that, while the CLI can map them to exit codes.
"""


class NatBenchError(ValueError):
    """Base class for every error raised by nat_bench."""


class AllZeroError(NatBenchError):
    pass


class NegativeEntryError(NatBenchError):
    pass


class BadCoefficientError(NatBenchError):
    pass


class ShapeMismatchError(NatBenchError):
    pass


class ZeroVarianceError(NatBenchError):
    pass


class EmptyFixationsError(NatBenchError):
    pass


class NoNegativesError(NatBenchError):
    """Every cell of the grid is fixated, so ROC analysis has no negatives."""


class ZeroCountError(NatBenchError):
    pass


class TooFewObserversError(NatBenchError):
    pass


class TooFewRealizationsError(NatBenchError):
    pass


class MissingFixationsError(NatBenchError):
    pass


class StatsDiscrepancyMismatchError(NatBenchError):
    pass


class NonDifferentiableError(NatBenchError):
    pass


class LengthMismatchError(NatBenchError):
    pass


class MissingStatsError(NatBenchError):
    pass


class TooShortError(NatBenchError):
    pass


class IdMismatchError(NatBenchError):
    pass


class InvariantViolationError(NatBenchError):
    pass


class EmptySpecError(NatBenchError):
    pass


class FormatError(NatBenchError):
    """A file does not follow its declared text format."""
