"""Exception hierarchy shared by every module of the package."""


class LieBNError(Exception):
    """Base class for all errors raised by :mod:`liebn`."""


class InvalidInput(LieBNError, ValueError):
    """Malformed input: wrong shape, non-finite entries, asymmetry."""


class DomainError(LieBNError, ValueError):
    """Input outside the domain of a matrix function (e.g. log of non-SPD)."""


class InvalidMetric(LieBNError, ValueError):
    """Metric parameters outside their admissible set."""


class ConvergenceError(LieBNError, RuntimeError):
    """An iterative solver hit its iteration cap.

    Attributes
    ----------
    last_iterate : ndarray
        The iterate at the time of failure.
    residual : float
        Norm of the first-order residual at ``last_iterate``.
    """

    def __init__(self, message, last_iterate=None, residual=float("nan")):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class CutLocusError(LieBNError, ValueError):
    """Rotation logarithm requested at (or numerically near) angle pi."""


class RetractError(LieBNError, ValueError):
    """QR retraction of a rank-deficient matrix."""


class BallError(LieBNError, ValueError):
    """Rotation batch not contained in a geodesic ball of radius pi/2."""


class UnsupportedBackend(LieBNError, TypeError):
    """Operation not available for the requested Lie-group backend."""


class UnknownDomain(LieBNError, KeyError):
    """Domain identifier without a registered normalization state."""
