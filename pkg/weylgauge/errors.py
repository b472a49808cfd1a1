"""Exception hierarchy shared by the library and the command line.

Each class carries the process exit code the CLI reports when it escapes a run.
"""


class WeylGaugeError(Exception):
    exit_code = 1


class ConfigError(WeylGaugeError):
    """Experiment configuration or settings value is invalid."""


class InvalidMetricError(WeylGaugeError):
    pass


class DegenerateMetricError(WeylGaugeError):
    pass


class UnsupportedSignatureError(WeylGaugeError):
    pass


class InvalidPathError(WeylGaugeError):
    pass


class NonContinuingError(WeylGaugeError):
    """Terminal node of one path does not meet the initial node of the next."""


class InsufficientDomainError(WeylGaugeError):
    pass


class MissingBoundaryError(WeylGaugeError):
    pass


class InvalidRegionError(WeylGaugeError):
    pass


class ConvergenceError(WeylGaugeError):
    exit_code = 2

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DegenerateStatisticsError(WeylGaugeError):
    exit_code = 2


class ResolutionError(WeylGaugeError):
    exit_code = 2
