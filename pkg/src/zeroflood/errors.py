"""Exception types shared across the package.

Everything raised on purpose derives from ZeroFloodError so the CLI can map
failures to exit codes without enumerating modules.
"""


class ZeroFloodError(Exception):
    """Base class for all errors raised by this package."""


class RasterFormatError(ZeroFloodError):
    """A raster file is malformed (bad magic, unparsable header, bad field)."""


class TruncationError(RasterFormatError):
    """A raster file declares more or fewer values than it contains."""


class EmptyWindowError(ZeroFloodError):
    """A requested window does not intersect the raster at all."""


class ValidationError(ZeroFloodError):
    """Inputs violate a documented precondition (duplicate keys, bad counts...)."""


class EmptyPopulationError(ZeroFloodError):
    """A statistic was requested over an empty population."""


class ShapeError(ZeroFloodError):
    """Array or raster shapes are incompatible with the requested operation."""


class UndefinedLossError(ZeroFloodError):
    """The loss is undefined because no valid pixels remain."""


class TrainingDivergedError(ZeroFloodError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class ConfigError(ZeroFloodError):
    """A pipeline configuration file is missing, malformed, or inconsistent."""
