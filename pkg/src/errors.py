# src/errors.py
"""
Exception hierarchy shared by every VoxSentinel module.

All pipeline errors derive from `VoxSentinelError`, so callers (notably the
CLI) can catch one base class. Each subclass also derives from the closest
builtin exception so generic ``except ValueError`` handlers keep working.
"""


class VoxSentinelError(Exception):
    """Base class for all pipeline errors."""


class DecodeError(VoxSentinelError, ValueError):
    """A container (WAV, VXF1, VXW1) could not be parsed."""


class UnsupportedFormatError(VoxSentinelError, ValueError):
    """The file is well formed but uses an encoding we do not decode."""


class ConfigurationError(VoxSentinelError, ValueError):
    """Parameters are inconsistent or out of range."""


class ShapeError(VoxSentinelError, ValueError):
    """Array or tensor shapes do not agree."""


class StateError(VoxSentinelError, RuntimeError):
    """An operation was called in the wrong lifecycle state."""


class BuildError(VoxSentinelError, ValueError):
    """A network cannot be built for the requested input shape."""


class SpecParseError(VoxSentinelError, ValueError):
    """A ModelSpec document is invalid. `path` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)


class DivergenceError(VoxSentinelError, ArithmeticError):
    """A loss or gradient became non-finite."""


class MetadataError(VoxSentinelError, LookupError):
    """Speaker metadata is missing or inconsistent."""

    def __str__(self) -> str:
        # LookupError would otherwise repr() the message
        return str(self.args[0]) if self.args else ""


class SplitError(VoxSentinelError, ValueError):
    """A dataset cannot be split with the requested fractions."""
