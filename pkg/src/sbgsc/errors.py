"""Exception types raised across the package."""


class SbgscError(Exception):
    """Base class for all package errors."""


class ConfigError(SbgscError, ValueError):
    """Invalid configuration value."""


class DomainError(SbgscError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ShapeError(SbgscError, ValueError):
    """Array dimensions do not line up."""


class SizeError(SbgscError, ValueError):
    """Input too large for an exact solver."""


class NumericError(SbgscError, FloatingPointError):
    """Non-finite input or intermediate value."""


class SingularTargetError(NumericError):
    """Training target undefined because sigma_t is zero."""


class ZeroPowerError(NumericError):
    """Power normalization of an all-zero signal."""


class DeepFadeError(NumericError):
    """Fading gain too small to equalize; the block is erased."""

    def __init__(self, message, erased=None):
        super().__init__(message)
        self.erased = erased


class IncompleteTrajectoryError(SbgscError, ValueError):
    """A trajectory lacks the recorded components an estimator needs."""


class TrainingDivergedError(NumericError):
    """Loss became non-finite during training."""

    def __init__(self, iteration, stage=None):
        where = f" in stage {stage!r}" if stage else ""
        super().__init__(f"training diverged at iteration {iteration}{where}")
        self.iteration = iteration
        self.stage = stage


class SamplerDivergedError(NumericError):
    """A sampler produced a non-finite state."""

    def __init__(self, step):
        super().__init__(f"sampler diverged at step {step}")
        self.step = step
