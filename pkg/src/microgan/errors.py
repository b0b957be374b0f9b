"""Exception types raised across the package."""


class MicroganError(Exception):
    """Base class for all package errors."""


class SizeError(MicroganError, ValueError):
    pass


class ShapeError(MicroganError, ValueError):
    pass


class SpecError(MicroganError, ValueError):
    pass


class StatisticsError(MicroganError, ValueError):
    pass


class RankError(MicroganError, ValueError):
    pass


class DeterminismError(MicroganError, RuntimeError):
    pass


class DomainError(MicroganError, ValueError):
    pass


class NonFiniteError(MicroganError, FloatingPointError):
    """A loss or gradient went NaN/Inf."""


class ConfigError(MicroganError, ValueError):
    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = list(keys)


class CheckpointError(MicroganError, IOError):
    pass
