"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid user-facing configuration (unknown names, inconsistent sizes, ...)."""


class SolverAbort(RuntimeError):
    """The time loop stopped early (non-finite values, CFL violation under ``assert``)."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step
