"""Exception types shared across the package."""

from __future__ import annotations


class SheetgenError(Exception):
    """Base class for all package-specific failures."""


class InvalidScaleError(SheetgenError, ValueError):
    """Root/mode pair outside the 30 supported scales."""


class UnconstructibleDurationError(SheetgenError, ValueError):
    """Base/dot combination that does not land on a whole number of 16th bins."""


class OverrideError(SheetgenError, ValueError):
    """Override configuration that is malformed or contradicts a sampling range."""


class PartitionError(SheetgenError, ValueError):
    """Rhythm partition request that cannot be satisfied."""


class ParseError(SheetgenError, ValueError):
    """Malformed serialized record or codec text.

    ``position`` is a token/character index when one is known.
    """

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


class EmitError(SheetgenError):
    """Score document contains a construct the engraver cannot express."""


class ToolchainError(SheetgenError):
    """A required external program is missing or unusable."""


class CompileError(SheetgenError):
    """A TeX or spacing pass exited with an error."""

    def __init__(self, message: str, log_tail: str = ""):
        super().__init__(message)
        self.log_tail = log_tail


class FitError(SheetgenError):
    """Single-page fitting failed even at minimum bar count and tightest spacing."""


class RasterizeError(SheetgenError):
    """PDF-to-image conversion failed."""


class MetricError(SheetgenError, ValueError):
    """Metric invoked on inputs for which it is undefined."""


class PredictionError(SheetgenError, ValueError):
    """Prediction file is malformed or inconsistent with the manifest."""


class JudgeError(SheetgenError):
    """Judge endpoint misconfigured or unreachable after retries."""
