"""Exception types raised across the package."""


class BalanceBotError(Exception):
    """Base class for all package errors."""


class ConfigError(BalanceBotError, ValueError):
    """Invalid or inconsistent configuration."""


class DegenerateParametersError(BalanceBotError):
    """The coupled acceleration system is singular for these parameters."""


class IntegrationDivergedError(BalanceBotError):
    """A simulation step produced a non-finite state.

    The offending state is kept on ``state``; episode runners also attach the
    partial trajectory on ``trajectory``.
    """

    def __init__(self, message, state=None, trajectory=None):
        super().__init__(message)
        self.state = state
        self.trajectory = trajectory


class NumericalFailureError(BalanceBotError):
    """An iterative numerical routine did not converge."""


class InsufficientDataError(BalanceBotError, ValueError):
    """Too few samples for a statistical estimate."""


class TrainingDivergedError(BalanceBotError):
    """A non-finite loss, gradient or logit appeared during learning."""

    def __init__(self, message, diagnostics=None, log=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
        self.log = log


class ShapeMismatchError(BalanceBotError, ValueError):
    """Network input or parameter shapes do not chain."""


class ModelFormatError(BalanceBotError):
    """Base class for model file parse errors."""


class VersionMismatchError(ModelFormatError):
    pass


class ShapeInconsistencyError(ModelFormatError):
    pass


class TruncatedFileError(ModelFormatError):
    pass
