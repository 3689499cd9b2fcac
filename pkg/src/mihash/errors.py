"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """Raised when an operation receives arguments outside its contract."""


class FileFormatError(ValueError):
    """Raised when a data file fails to parse; message carries the location."""


class TrainingDiverged(RuntimeError):
    """Raised when a gradient or weight update stops being finite."""
