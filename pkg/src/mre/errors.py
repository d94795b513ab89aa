"""Exception hierarchy shared by all solver modules."""


class MREError(Exception):
    """Base class for every error raised by the package."""


class DomainError(MREError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(MREError, ValueError):
    """Invalid solver or benchmark configuration."""


class FormatError(MREError):
    """Malformed binary grid file.

    Parameters
    ----------
    message : str
        Human readable description.
    offset : int
        Byte offset in the file where the problem was detected.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class AssemblyError(MREError):
    """A matrix needed during operator assembly is singular or near-singular."""

    def __init__(self, message, condition=None):
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3e})"
        super().__init__(message)
        self.condition = condition


class StepError(MREError):
    """A time step failed (nonlinear solve did not converge, singular stage)."""

    def __init__(self, message, residual=None, stage=None):
        super().__init__(message)
        self.residual = residual
        self.stage = stage


class InstabilityError(MREError):
    """The direct integrator blew up (velocity norm above the divergence cap)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class QuadratureError(MREError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class MetricError(MREError):
    """An error metric could not be evaluated (e.g. every reference norm vanished)."""


class ReferenceRejected(MREError):
    """A numerical reference failed its self-convergence gate."""


class IntegrationAborted(MREError):
    """A step error interrupted `integrate`; carries the partial trajectory."""

    def __init__(self, message, trajectory, cause):
        super().__init__(message)
        self.trajectory = trajectory
        self.cause = cause
