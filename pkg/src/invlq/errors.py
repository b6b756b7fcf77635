"""Exception hierarchy shared by the solvers and the command line."""


class LqError(Exception):
    """Base class for every error raised by :mod:`invlq`."""


class NumericsError(LqError):
    """A dense linear-algebra kernel could not meet its precondition."""


class ValidationError(LqError):
    """A problem violates one of the standing assumptions."""


class ReconstructionError(LqError):
    """A stage of the inverse pipeline failed.

    ``stage`` names the failing step (``fit``, ``split``, ``delta``,
    ``cost``) so callers can count failures per stage.
    """

    def __init__(self, message, stage=None):
        super().__init__(message if stage is None else f"[{stage}] {message}")
        self.stage = stage


class IntegrationError(LqError):
    """An ODE flow escaped or failed its residual check."""
