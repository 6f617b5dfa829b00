"""Exception hierarchy shared across the package.

Every failure mode raised on purpose is one of these, so callers (and the
CLI) can distinguish usage/config mistakes from corrupt files and from
numerical blow-ups.
"""


class SpecPartError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SpecPartError, ValueError):
    """Tensor shapes are inconsistent with the requested operation."""


class BoundsError(SpecPartError, IndexError):
    """An index lies outside the valid range."""


class ConfigError(SpecPartError, ValueError):
    """A configuration value is invalid or internally inconsistent."""


class FormatError(SpecPartError, ValueError):
    """A binary file does not conform to its format.

    Carries the byte offset at which parsing failed when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SplitError(SpecPartError, ValueError):
    """A dataset split cannot be constructed as requested."""


class RenderError(SpecPartError, ValueError):
    """A classification map cannot be rendered (e.g. missing palette entry)."""


class NumericError(SpecPartError, FloatingPointError):
    """A non-finite value appeared where the computation requires finite ones."""


class DegenerateInputError(SpecPartError, ValueError):
    """Input data is degenerate (e.g. a constant cube cannot be normalized)."""
