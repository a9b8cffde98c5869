"""Exception types raised across the package."""


class TomographyError(Exception):
    """Base class for all package errors."""


class NotHermitian(TomographyError, ValueError):
    pass


class TraceNotOne(TomographyError, ValueError):
    pass


class NotPSD(TomographyError, ValueError):
    pass


class ConvergenceFailure(TomographyError, RuntimeError):
    pass


class DimensionMismatch(TomographyError, ValueError):
    pass


class ShapeMismatch(TomographyError, ValueError):
    pass


class IndexOutOfRange(TomographyError, IndexError):
    pass


class NotInvertible(TomographyError, ValueError):
    pass


class InvalidPair(TomographyError, ValueError):
    pass


class Divergence(TomographyError, RuntimeError):
    """Likelihood kept decreasing; the dilution parameter is too aggressive."""


class InvalidDistribution(TomographyError, ValueError):
    pass


class AllUsed(TomographyError, RuntimeError):
    """Every predefined measurement has already been selected."""


class UnsupportedCombination(TomographyError, ValueError):
    pass


class InvalidSpec(TomographyError, ValueError):
    pass


class FormatError(TomographyError, OSError):
    """A dataset or checkpoint file is malformed or fails its integrity check."""
