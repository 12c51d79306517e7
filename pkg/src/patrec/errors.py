"""Exception types shared across the toolkit."""


class PatrecError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(PatrecError, ValueError):
    """Vector or image size does not match the operator it is used with."""


class RowOutOfRange(PatrecError, IndexError):
    """Scan-line row index outside the image."""


class UnreadableFile(PatrecError, OSError):
    """Input file missing, unparseable, or of an unsupported format."""


class UnsupportedSize(PatrecError, ValueError):
    """Requested phantom size outside the supported range."""


class GeometryInsideGrid(PatrecError, ValueError):
    """Detection circle does not enclose the image support."""


class WindowTooShort(PatrecError, ValueError):
    """Time window does not cover all source-to-transducer distances."""


class DeltaOutOfRange(PatrecError, ValueError):
    """Row-removal fraction outside (0, 0.5)."""


class NonConvergence(PatrecError, RuntimeError):
    """Iterative solve exceeded its iteration cap."""


class DegenerateCost(PatrecError, ArithmeticError):
    """Both cost terms vanish; relative smoothness undefined."""


class Lambda0TooLarge(PatrecError, ValueError):
    """Initial regularization weight already satisfies the smoothness bound."""


class CapExceeded(PatrecError, RuntimeError):
    """Probed regularization weight exceeded the safety cap."""
