"""
Errors - exception hierarchy shared by the library and the command line
"""


class PositionalModulationError(Exception):
    """Base class for every error raised by tworay_pm"""

    exit_code = 1


class ConfigError(PositionalModulationError):
    """Configuration text could not be parsed or validated"""

    exit_code = 2

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class DesignInputError(PositionalModulationError, ValueError):
    """Inputs violate a precondition of a design operation"""

    exit_code = 2


class GeometryError(DesignInputError):
    """Scenario geometry is degenerate or places a receiver outside the model"""


class SolverError(PositionalModulationError):
    """A numerical solve failed"""

    exit_code = 3


class SingularSystemError(SolverError):
    """Linear system is numerically singular"""

    def __init__(self, message, size, rank):
        self.size = size
        self.rank = rank
        super().__init__(f"{message} (size {size}, numerical rank {rank})")


class InconsistentConstraintError(SolverError):
    """Equality constraints cannot be met by any weight vector"""


class ConvergenceError(SolverError):
    """Iterative solver stopped before meeting its tolerances"""

    def __init__(self, message, trace=()):
        self.trace = list(trace)
        super().__init__(message)


class InfeasibleError(PositionalModulationError):
    """Error-norm budget is below what the candidate array can achieve"""

    exit_code = 4

    def __init__(self, message, min_residual):
        self.min_residual = min_residual
        super().__init__(f"{message} (minimal achievable error norm {min_residual:.6g})")


class StageError(PositionalModulationError):
    """A study stage failed; keeps what was written before the failure"""

    def __init__(self, stage, cause, manifest=()):
        self.stage = stage
        self.cause = cause
        self.manifest = list(manifest)
        self.exit_code = getattr(cause, "exit_code", 1)
        super().__init__(f"stage '{stage}' failed: {cause}")
