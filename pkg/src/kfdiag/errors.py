"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid experiment configuration, config file, or input artifact."""


class NumericalError(RuntimeError):
    """A numerical operation failed (singular matrix, lost positive definiteness).

    ``step`` carries the filter step index when the failure happened inside a
    filtering recursion, else None.
    """

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"{message} (at step {step})"
        super().__init__(message)
        self.step = step
