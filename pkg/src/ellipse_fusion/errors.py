"""Exception hierarchy shared by every module."""


class EllipseFusionError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(EllipseFusionError, ValueError):
    """Malformed input: non-finite entries, shape mismatch, bad parameters."""


class DomainError(EllipseFusionError, ValueError):
    """A mathematical precondition failed (matrix not PD, |r| >= 1, ...)."""


class InfeasibleError(EllipseFusionError):
    """A covariance model admits no valid estimate.

    ``report`` carries the :class:`~ellipse_fusion.linalg.PsdReport` of the
    offending matrix when one is available.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InsufficientInformationError(InfeasibleError):
    """The normal matrix A^T W A is singular, so x_hat is not identifiable."""
