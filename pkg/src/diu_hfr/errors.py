"""Exception hierarchy shared by every module in the package."""


class DIUError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DIUError, ValueError):
    """An invalid configuration value; the message names the field."""


class ShapeError(DIUError, ValueError):
    pass


class DataError(DIUError, ValueError):
    pass


class DegenerateEmbeddingError(DIUError, ArithmeticError):
    """An embedding with (near) zero norm reached a cosine computation."""


class MetricError(DIUError, ValueError):
    pass


class ProtocolError(DIUError, ValueError):
    pass


class CheckpointError(DIUError, IOError):
    pass


class TrainingDivergedError(DIUError, RuntimeError):
    def __init__(self, step: int, detail: str) -> None:
        super().__init__(f"non-finite loss at step {step}: {detail}")
        self.step = step
