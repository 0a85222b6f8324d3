"""Exception hierarchy shared across the pipeline.

The CLI maps ``ValidationError`` to exit code 2 and ``NumericError`` to
exit code 3; anything else is a bug and propagates.
"""


class ModfuseError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(ModfuseError):
    """Bad inputs: malformed files, inconsistent shapes, invalid config."""


class NumericError(ModfuseError):
    """Runtime numeric failure: divergence, non-finite values."""


class SchemaError(ValidationError):
    """Column schema cannot be fitted or applied."""


class IngestError(ValidationError):
    """A feature/label/manifest file violates its format contract."""


class StratifyError(ValidationError):
    """A stratified split cannot satisfy the requested fractions."""


class ResampleError(ValidationError):
    """Oversampling preconditions violated (single class, bad k, ...)."""


class FusionError(ValidationError):
    """Fusion inputs inconsistent (missing everything, zero weights, ...)."""


class TrainingError(NumericError):
    """Training diverged; carries the offending epoch index."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class OptimizerError(NumericError):
    """Non-finite gradient or optimizer state; names the tensor."""
