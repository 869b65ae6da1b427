"""Exception types shared across the package."""


class FitError(RuntimeError):
    """Model fitting failed. Carries the best iterate seen, when available."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class EncodingError(ValueError):
    """A covariate could not be encoded under the active schema."""


class GenerationError(RuntimeError):
    """Synthetic corpus generation could not satisfy its constraints."""


class TrainingError(RuntimeError):
    """Network training aborted (non-finite loss or similar)."""

    def __init__(self, message, batch_id=None):
        super().__init__(message)
        self.batch_id = batch_id


class UndefinedMetric(Exception):
    """A metric has no support (no comparable pairs / single class)."""
