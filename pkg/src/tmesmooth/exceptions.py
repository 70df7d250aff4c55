"""Exception types raised by the library."""
import numpy as np

__all__ = [
    "DepthExceededError",
    "NotPSDError",
    "SingularInnovationError",
    "SingularPredictionError",
    "ScheduleMismatchError",
    "DivergenceError",
    "ConditionViolatedError",
    "EstimationError",
    "RunFailedError",
]


class DepthExceededError(RuntimeError):
    """A nested derivative needs more orders than the configured maximum depth."""


class NotPSDError(np.linalg.LinAlgError):
    """Cholesky factorization failed at every jitter level."""


class SingularInnovationError(np.linalg.LinAlgError):
    """The innovation covariance could not be factorized."""


class SingularPredictionError(np.linalg.LinAlgError):
    """A predicted covariance could not be factorized for the smoother gain."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ScheduleMismatchError(ValueError):
    """An observation time does not fall on the simulation grid."""


class DivergenceError(FloatingPointError):
    """A simulated path left the finite range."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ConditionViolatedError(ValueError):
    """The contraction condition ``2 c_G < 1`` does not hold."""


class EstimationError(RuntimeError):
    """Filtering or smoothing failed at a given step."""

    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


class RunFailedError(RuntimeError):
    """A Monte Carlo run failed; carries the seed and run index to reproduce it."""

    def __init__(self, message: str, seed: int, index: int):
        super().__init__(f"run {index} (seed {seed}): {message}")
        self.seed = seed
        self.index = index
