"""Batch normalization and statistics on Lie groups.

Backends cover SPD matrices under deformed affine-invariant, log-Euclidean
and log-Cholesky metrics, the rotation group SO(n) and plain Euclidean
space. See :mod:`liebn.batchnorm` for the layers and :mod:`liebn.cli` for the
command-line harness.
"""

from .batchnorm import (
    BatchStats,
    DomainSpecificLieBatchNorm,
    LieBatchNorm,
    MomentumLieBatchNorm,
    batch_statistics,
    gamma_train,
    normalize_batch,
    pullback_forward,
)
from .errors import (
    BallError,
    ConvergenceError,
    CutLocusError,
    DomainError,
    InvalidInput,
    InvalidMetric,
    LieBNError,
    RetractError,
    UnknownDomain,
    UnsupportedBackend,
)
from .gaussian import GaussianParams, SampleReport, log_density_unnorm, sample
from .groups import EuclideanGroup, LieGroup, RotationGroup, SpdGroup, group_from_dict
from .spd import SpdMetric

__version__ = "0.1.0"
