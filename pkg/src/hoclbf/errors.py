"""Exception types shared across the package."""


class HoclbfError(Exception):
    """Base class for all library errors."""


class NonDifferentiable(HoclbfError):
    """A fractional power was differentiated at exactly zero."""


class DegenerateRow(HoclbfError):
    """A barrier row has no control authority and a negative constant part."""

    def __init__(self, message, a=None, c=None):
        super().__init__(message)
        self.a = a
        self.c = c


class InvalidExponent(HoclbfError, ValueError):
    pass


class StateDiverged(HoclbfError):
    pass


class STLSyntaxError(HoclbfError):
    """Raised by the formula parser; carries the offending position."""

    def __init__(self, message, position=None, expected=None):
        loc = f" at position {position}" if position is not None else ""
        super().__init__(f"{message}{loc}")
        self.position = position
        self.expected = expected


class NegationUnsupported(STLSyntaxError):
    pass


class BadInterval(STLSyntaxError):
    pass


class InsufficientHorizon(HoclbfError):
    pass


class Intractable(HoclbfError):
    """The formula cannot be broken into timed G/F tasks."""


class DeadlineUnreachable(HoclbfError):
    pass


class ConfigError(HoclbfError):
    pass
