"""Exception hierarchy shared across the toolkit."""


class ShmVoiError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(ShmVoiError, ValueError):
    """Invalid configuration, layout or mesh setup."""


class DomainError(ShmVoiError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class NumericalError(ShmVoiError, RuntimeError):
    """Solver failure: singular system, eigensolver non-convergence, ..."""


class IdentificationError(ShmVoiError, RuntimeError):
    """System identification or mode pairing could not deliver the requested modes."""


class ExtrapolationError(ShmVoiError, ValueError):
    """Surrogate query outside the tabulated range."""


class FitError(ShmVoiError, RuntimeError):
    """Response-surface fit is ill-conditioned."""


class BuildError(ShmVoiError, RuntimeError):
    """Surrogate construction failed at a grid point."""


class InferenceError(ShmVoiError, RuntimeError):
    """Posterior computation failed (optimizer, Hessian, sampler)."""


class AnalysisError(ShmVoiError, RuntimeError):
    """Inconsistent inputs to a decision analysis."""
