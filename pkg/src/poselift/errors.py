"""Structured errors shared across the package."""


class PoseLiftError(Exception):
    """Base class for all package errors."""


class ShapeMismatchError(PoseLiftError):
    """Raised when array dimensions disagree with the expected layout."""

    def __init__(self, what, expected, got):
        self.what = what
        self.expected = expected
        self.got = got
        super().__init__(f"shape mismatch in {what}: expected {expected}, got {got}")


class GeometryError(PoseLiftError):
    """Invalid geometric configuration (nonpositive depth, degenerate scale, ...)."""

    def __init__(self, message, frame=None, joint=None):
        self.frame = frame
        self.joint = joint
        loc = ""
        if frame is not None:
            loc += f" at frame {frame}"
        if joint is not None:
            loc += f", joint {joint}"
        super().__init__(message + loc)


class ConfigError(PoseLiftError):
    """Invalid configuration value or unknown config key."""


class TrainingError(PoseLiftError):
    """Numerical failure during training (nonfinite loss, divergence)."""

    def __init__(self, message, step=None, batch_index=None):
        self.step = step
        self.batch_index = batch_index
        extra = []
        if step is not None:
            extra.append(f"step {step}")
        if batch_index is not None:
            extra.append(f"batch index {batch_index}")
        if extra:
            message = f"{message} ({', '.join(extra)})"
        super().__init__(message)
