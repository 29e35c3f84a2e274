"""Exception types shared across the package."""


class QuanvError(Exception):
    """Base class for every error raised by quanvnet."""


class SizeError(QuanvError, ValueError):
    """A dimension, register size or element count is out of range."""


class ArgumentError(QuanvError, ValueError):
    """An argument has the right type but an invalid value."""


class RangeError(QuanvError, ValueError):
    """A numeric value (pixel, probability, ...) lies outside its domain."""


class ApplicationError(QuanvError, ValueError):
    """A gate cannot be applied to the requested qubits."""


class ShapeError(QuanvError, ValueError):
    """Tensor shapes are mutually inconsistent."""


class ConfigurationError(QuanvError, ValueError):
    """A training or pipeline configuration cannot be honoured."""


class ConsistencyError(QuanvError, RuntimeError):
    """An internal numerical invariant was violated (e.g. norm drift)."""


class CorruptionError(QuanvError):
    """A binary file failed validation.

    ``field`` names the part of the file that failed (``magic``,
    ``version``, ``crc``, ``truncated``, ...).
    """

    def __init__(self, field, message=None, path=None):
        self.field = field
        self.path = path
        text = message or f"corrupt {field}"
        if path is not None:
            text = f"{path}: {text}"
        super().__init__(text)
