from typing import Optional


class LtcInferError(Exception):
    """Base class for every error raised by ltcinfer services"""


class ConfigurationError(LtcInferError, ValueError):
    pass


class ThresholdNotReachedError(ConfigurationError):
    def __init__(self, stream: str, threshold: float):
        self.stream = stream
        self.threshold = threshold
        super().__init__(f"Stream '{stream}' never exceeds {threshold}")


class DataIngestionError(LtcInferError, ValueError):
    pass


class NumericalError(LtcInferError, ArithmeticError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, day: float, message: Optional[str] = None):
        self.day = day
        super().__init__(message or f"Trajectory diverged at day {day:g}")


class DomainError(NumericalError, ValueError):
    pass


class SPDError(NumericalError):
    pass


class DegenerateEnsembleError(NumericalError):
    pass
