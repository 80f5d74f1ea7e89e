"""Exception types shared across the package."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to produce a trustworthy value."""


class ChartError(ValueError):
    """A point lies outside the domain of a coordinate chart."""


class FormatError(ValueError):
    """A data file does not follow the expected layout."""


class TruncatedPayloadError(FormatError):
    """A data file ends before its header says it should."""
