"""Exception types shared across the package."""


class WalkfamError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameterError(WalkfamError, ValueError):
    """A distribution, member vector, or option failed validation."""


class UnsupportedModeError(WalkfamError, ValueError):
    """The requested operation does not apply to this kind of input."""


class UnreachableLevelError(WalkfamError, ValueError):
    """The norm level admits no coordinate profile for this member."""


class TruncationError(WalkfamError, RuntimeError):
    """State-space truncation too small for the requested horizon.

    Carries ``suggested_n_max`` so callers can retry.
    """

    def __init__(self, message, suggested_n_max=None):
        super().__init__(message)
        self.suggested_n_max = suggested_n_max


class UnconvergedError(WalkfamError, RuntimeError):
    """A solver result did not meet its convergence criterion."""


class CostLimitError(WalkfamError, ValueError):
    """An exact enumeration would exceed the feasible cost bound.

    Carries ``estimated_terms`` for the caller's benefit.
    """

    def __init__(self, message, estimated_terms=None):
        super().__init__(message)
        self.estimated_terms = estimated_terms


class ConfigError(WalkfamError, ValueError):
    """An experiment configuration is malformed or inconsistent."""
