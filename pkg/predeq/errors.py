from __future__ import annotations

__all__ = [
    'BadParamsError',
    'CellNarrowerThanMFPError',
    'ConfigTypeError',
    'DimMismatchError',
    'DimensionTooLargeError',
    'DomainError',
    'FrontNotFormedError',
    'GridTooShortError',
    'InvalidScheduleError',
    'MissingRequiredError',
    'NonPositiveTemperatureError',
    'NonUnitaryDriftError',
    'NotHermitianError',
    'NotPositiveError',
    'NotUnitaryError',
    'OffSimplexError',
    'PredeqError',
    'StepTooLargeError',
    'TooManyStepsError',
    'TraceMismatchError',
    'UnknownKeyError',
    'UnstableStepError',
    'WindowSaturatedError',
    'ZeroMatrixError',
]


class PredeqError(ValueError):
    """Base class of every validation error raised by `predeq`."""


# denmat
class NotHermitianError(PredeqError):
    pass


class NotPositiveError(PredeqError):
    pass


class TraceMismatchError(PredeqError):
    pass


class DimMismatchError(PredeqError):
    pass


class ZeroMatrixError(PredeqError):
    pass


class NonPositiveTemperatureError(PredeqError):
    pass


class DimensionTooLargeError(PredeqError):
    pass


# collision
class NotUnitaryError(PredeqError):
    pass


class InvalidScheduleError(PredeqError):
    pass


class NonUnitaryDriftError(PredeqError):
    pass


# transport
class UnstableStepError(PredeqError):
    pass


class GridTooShortError(PredeqError):
    pass


class FrontNotFormedError(PredeqError):
    pass


class WindowSaturatedError(PredeqError):
    pass


# collapse
class OffSimplexError(PredeqError):
    pass


class StepTooLargeError(PredeqError):
    pass


class TooManyStepsError(PredeqError):
    pass


# measurement
class CellNarrowerThanMFPError(PredeqError):
    pass


class DomainError(PredeqError):
    pass


class BadParamsError(PredeqError):
    pass


# configuration
class UnknownKeyError(PredeqError):
    def __init__(self, key: str, command: str):
        self.key = key
        super().__init__(f'Unknown key `{key}` for command `{command}`.')


class MissingRequiredError(PredeqError):
    def __init__(self, key: str, command: str):
        self.key = key
        super().__init__(f'Missing required key `{key}` for command `{command}`.')


class ConfigTypeError(PredeqError, TypeError):
    def __init__(self, key: str, expected: str, value: object):
        self.key = key
        super().__init__(
            f'Key `{key}` must be of type {expected}, but is {value!r}.'
        )
