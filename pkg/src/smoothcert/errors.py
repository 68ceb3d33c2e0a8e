"""Exception types shared across the package."""


class SmoothcertError(Exception):
    """Base class for all package-specific errors."""


class DomainError(SmoothcertError):
    """A numeric argument lies outside the mathematical domain of the function."""


class ArgumentError(SmoothcertError):
    """An argument violates a documented precondition."""


class ShapeError(SmoothcertError):
    """Tensor shapes do not match what an operation requires."""


class StateError(SmoothcertError):
    """An operation was called in the wrong order (e.g. backward before forward)."""


class FormatError(SmoothcertError):
    """A file does not conform to its binary or JSON format."""


class RangeError(SmoothcertError):
    """Pixel data lies outside the required [0, 1] range."""


class RemoteError(SmoothcertError):
    """A remote classifier call failed (transport, HTTP status, or bad payload)."""


class MappingError(SmoothcertError):
    """A remote label has no class index and the fallback class is disabled."""


class BindError(SmoothcertError):
    """The classification server could not bind its address."""


class ConfigError(SmoothcertError):
    """An experiment or training configuration is invalid."""


class DataError(SmoothcertError):
    """A dataset is unusable for the requested operation (e.g. empty)."""


class CheckpointError(SmoothcertError):
    """A checkpoint is incompatible with the requested training plan."""
