"""Exception hierarchy for panel_bvecm.

Every error raised by the package derives from :class:`BvecmError` so callers
(and the CLI exit-code table) can dispatch on category.
"""


class BvecmError(Exception):
    """Base class for all package errors."""


class NumericalError(BvecmError):
    """A matrix failed a numerical precondition."""


class NotPSD(NumericalError):
    pass


class NotPD(NumericalError):
    pass


class NotSymmetric(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class NonFinite(NumericalError):
    pass


class Unstable(NumericalError):
    pass


class OutOfRange(BvecmError, ValueError):
    pass


class DimensionMismatch(BvecmError, ValueError):
    pass


class InsufficientData(BvecmError, ValueError):
    pass


class ImproperPrior(BvecmError, ValueError):
    pass


class DofTooSmall(BvecmError, ValueError):
    pass


class NoRestriction(BvecmError, ValueError):
    pass


class EmptyChain(BvecmError, ValueError):
    pass


class ConfigError(BvecmError, ValueError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class DataError(BvecmError, ValueError):
    """Problems with an input CSV."""


class ParseError(DataError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MissingCell(DataError):
    pass


class RaggedPanel(DataError):
    pass


class DuplicateKey(DataError):
    pass


class ChainAbort(BvecmError):
    """Raised when a sampler step fails; records where."""

    def __init__(self, step, iteration, cause):
        super().__init__(f"chain aborted at step {step!r}, iteration {iteration}: {cause}")
        self.step = step
        self.iteration = iteration
        self.cause = cause
