"""Exception hierarchy shared by all retarda modules."""


class RetardaError(Exception):
    """Base class for every error raised by retarda."""


class DomainError(RetardaError, ValueError):
    """Integration bounds or times outside the admissible range."""


class GridError(RetardaError, ValueError):
    """Two objects were built on incompatible grids, or a time is off-grid."""


class InputError(RetardaError, ValueError):
    """Input data violates a documented precondition."""


class ConfigError(RetardaError, ValueError):
    """Invalid solver or scenario configuration.

    ``key`` names the offending configuration entry when one is known.
    """

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class PicardError(RetardaError, RuntimeError):
    """Picard iteration failed to converge inside a time window."""

    def __init__(self, message, residual=float("nan"), t_last=float("nan")):
        self.residual = residual
        self.t_last = t_last
        super().__init__(message)


class DegenerateFitError(RetardaError, ValueError):
    """An exponential envelope cannot be fitted (zero norms, empty window)."""


class CertificateError(RetardaError, ValueError):
    """No admissible decay certificate exists for the given data."""
