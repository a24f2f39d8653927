"""Exception and warning types raised across the package."""


class BscsError(Exception):
    """Base class for all package errors."""


class DomainError(BscsError, ValueError):
    """A station parameter violates its validity domain.

    ``violations`` holds one ``(field, message)`` pair per broken invariant;
    ``field`` is the first offending field name.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        self.field = self.violations[0][0] if self.violations else None
        msg = "; ".join(f"{f}: {m}" for f, m in self.violations)
        super().__init__(msg)


class ConfigError(BscsError, ValueError):
    """Malformed configuration file or simulation settings."""


class ShapeMismatch(BscsError, ValueError):
    pass


class SingularMatrix(BscsError, ArithmeticError):
    pass


class StateSpaceTooLarge(BscsError, ValueError):
    pass


class NoConvergence(BscsError, ArithmeticError):
    pass


class NotPositiveRecurrent(BscsError, ValueError):
    pass


class BoundaryError(BscsError, ValueError):
    """Zero-drift configuration: neither sub-network is positive recurrent."""


class MassDeficit(BscsError, ArithmeticError):
    pass


class BandTooNarrow(UserWarning):
    """The finite generator has no repeating block band (B < S + C)."""
