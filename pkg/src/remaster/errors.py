"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Dimension mismatch; ``axis`` names the offending axis."""

    def __init__(self, message, axis=None):
        super().__init__(message)
        self.axis = axis


class DataError(RuntimeError):
    """Invalid or unreadable input data (frames, references, noise bank)."""


class CheckpointError(RuntimeError):
    """Corrupt, truncated, or incompatible checkpoint file."""
