"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value; carries the offending field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class ConvergenceError(RuntimeError):
    """An iterative solver failed to converge; carries the final residual."""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


class SimulationError(RuntimeError):
    """Numerical failure during a pipeline stage; carries the stage name."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class AmbiguousCondensateError(RuntimeError):
    """Leading density-matrix eigenvalue is (near) degenerate."""

    def __init__(self, gap_ratio: float):
        self.gap_ratio = gap_ratio
        super().__init__(
            "condensate mode ambiguous: second eigenvalue is "
            f"{gap_ratio:.3f} of the first"
        )
