"""Exception hierarchy.

The CLI maps these onto exit codes: :class:`InputError` -> 2,
:class:`NumericError` -> 3, :class:`VerificationError` -> 4.
"""


class CcnetError(Exception):
    """Base class for all errors raised by this package."""


class InputError(CcnetError, ValueError):
    """Malformed or inconsistent input data (files, shapes, arguments)."""


class ShapeError(InputError):
    """Array shapes do not agree with what an operation requires."""


class FormatError(InputError):
    """A file or byte stream does not follow its declared format."""


class NumericError(CcnetError, ArithmeticError):
    """Non-finite values appeared during a computation."""


class UndefinedMetricError(CcnetError, ZeroDivisionError):
    """A ratio metric has a zero denominator."""


class VerificationError(CcnetError):
    """A self-check (e.g. gradient verification) exceeded its tolerance."""
