"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class TrainingDivergedError(RuntimeError):
    """A non-finite value appeared during optimisation.

    ``step`` is the update index at which it was detected and ``trace`` holds
    whatever per-step loss records were collected before the failure.
    """

    def __init__(self, message, step, trace=None):
        super().__init__(f"{message} (step {step})")
        self.step = step
        self.trace = list(trace or [])


class GenerationError(RuntimeError):
    """Synthetic data could not satisfy its constraints."""


class UndefinedMetricError(ValueError):
    """A metric has no defined value for the given counts."""
