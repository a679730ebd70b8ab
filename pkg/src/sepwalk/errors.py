"""Exception types raised across the package."""


class SepwalkError(Exception):
    """Base class for all package errors."""


class RangeError(SepwalkError, ValueError):
    def __init__(self, field, value=None, message=None):
        self.field = field
        self.value = value
        super().__init__(message or f"{field} out of range: {value!r}")


class EllipticityError(RangeError):
    def __init__(self, field, value=None):
        super().__init__(
            field, value,
            f"{field}={value!r} is degenerate (0 or 1); pass allow_degenerate=True to permit it",
        )


class DomainError(SepwalkError, ValueError):
    pass


class ConfigError(SepwalkError, ValueError):
    def __init__(self, key, message=None):
        self.key = key
        super().__init__(f"{key}: {message}" if message else str(key))


class WindowError(SepwalkError, IndexError):
    pass


class BackendError(SepwalkError):
    pass


class SpanError(SepwalkError, ValueError):
    pass


class HorizonError(SepwalkError, ValueError):
    pass


class InsufficientData(SepwalkError):
    pass


class InsufficientRecords(InsufficientData):
    pass


class NoRenewalFound(UserWarning):
    """Emitted (as a warning) when no candidate survives the forward check."""
