"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Vector or register sizes do not match."""


class DegenerateInputError(ValueError):
    """Input cannot be encoded (e.g. the all-zero vector)."""


class RangeError(ValueError):
    """A value lies outside its admissible interval."""


class VarianceUndefinedError(ValueError):
    """Fewer than two query rounds, so a cross-round variance is meaningless."""


class ServiceError(RuntimeError):
    """The simulated QNN service cannot answer the request."""


class TrainingError(RuntimeError):
    """Training hit an unrecoverable numerical or data problem."""


class IDXParseError(ValueError):
    """Base class for malformed IDX containers."""


class BadMagicError(IDXParseError):
    pass


class TruncatedFileError(IDXParseError):
    pass


class CountMismatchError(IDXParseError):
    pass


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
