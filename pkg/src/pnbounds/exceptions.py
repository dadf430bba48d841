"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid model description or run configuration."""


class UnstableFilterError(ValueError):
    """Frequency-noise filter has a pole on or outside the unit circle."""


class EstimatorError(RuntimeError):
    """A tracker or bound estimator could not produce a meaningful value."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class NonPSDError(EstimatorError):
    """Covariance matrix is not positive semi-definite beyond round-off."""
