"""Exception types shared across the package."""


class EprcsError(Exception):
    """Base class for all package errors."""


class InfeasibleGrid(EprcsError):
    """No Fourier-compatible grid covers the state at the requested size."""


class BadOrder(EprcsError, ValueError):
    """Hadamard order is not a power of two."""


class TooManyRows(EprcsError, ValueError):
    """More measurements requested than distinct joint sensing rows."""


class ShapeMismatch(EprcsError, ValueError):
    pass


class EmptyRecord(EprcsError):
    """A coincidence record with zero total counts."""


class Diverged(EprcsError, FloatingPointError):
    """The solver objective became non-finite."""


class AllZero(EprcsError, ValueError):
    """Thresholding removed every entry of a distribution."""


class ConfigError(EprcsError, ValueError):
    pass


class MissingArtifact(EprcsError, FileNotFoundError):
    pass
