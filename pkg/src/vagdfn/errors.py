"""Exception hierarchy shared by all modules."""


class VagError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameterError(VagError, ValueError):
    pass


class GeometryError(VagError):
    pass


class MeshParseError(VagError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidPropertyError(VagError, ValueError):
    pass


class SingularSystemError(VagError):
    pass


class ConvergenceError(VagError):
    """Raised when a Krylov solver exhausts its iteration budget.

    The relative residual history is kept on ``residuals`` so callers can log
    or plot it.
    """

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = list(residuals)


class ConfigurationError(VagError):
    pass


class CFLViolationError(VagError):
    pass


class NoFlowError(VagError):
    pass
