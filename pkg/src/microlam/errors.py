"""Exception hierarchy.

Every error raised on bad input derives from :class:`ValidationError`, which the
command line maps to exit code 2. :class:`CheckFailure` marks a completed
computation whose verification did not pass (exit code 3).
"""

from __future__ import annotations


class MicrolamError(Exception):
    """Base class for all package errors."""


class ValidationError(MicrolamError):
    """Input rejected before any computation."""


class CheckFailure(MicrolamError):
    """A verification step ran and failed."""


class DimensionError(ValidationError):
    def __init__(self, message: str, index: object = None):
        super().__init__(message)
        self.index = index


class InvalidInputError(ValidationError):
    pass


class UnsupportedOrderError(ValidationError):
    pass


class CompatibilityError(ValidationError):
    def __init__(self, message: str, certificate: object = None):
        super().__init__(message)
        self.certificate = certificate


class TilingError(ValidationError):
    pass


class DegenerateParametersError(ValidationError):
    pass


class SequencingError(ValidationError):
    pass


class MembershipError(ValidationError):
    pass


class EnumerationGuardError(ValidationError):
    pass


class CalibrationError(ValidationError):
    pass


class FitError(ValidationError):
    pass
