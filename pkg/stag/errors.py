"""Exception types raised by the toolkit.

All of them derive from ValueError or RuntimeError so callers that only care
about the broad category can keep catching the builtins.
"""


class GraphConstructionError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class CitationFormatError(ValueError):
    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class EigensolverError(RuntimeError):
    def __init__(self, sweeps: int, residual: float):
        super().__init__(
            f"Jacobi eigensolver did not converge after {sweeps} sweeps "
            f"(off-diagonal Frobenius norm {residual:.3e})"
        )
        self.sweeps = sweeps
        self.residual = residual


class BackwardError(RuntimeError):
    pass


class TrainingDivergedError(RuntimeError):
    pass
