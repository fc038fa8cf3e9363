"""Random test data: SPD matrices, rotations and synthetic batches."""

import numpy as np

from .errors import UnsupportedBackend
from .groups import EuclideanGroup, RotationGroup, SpdGroup
from .rotations import rot_exp, rotation_angles, skew

# rotations are drawn within this angle of their center, so members are
# pairwise closer than pi/2 and the batch passes the Frechet-mean ball check
ROT_MAX_ANGLE = 0.24 * np.pi


def random_orthogonal(rng, n):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def random_sym(rng, n, scale=1.0):
    A = rng.standard_normal((n, n)) * scale
    return 0.5 * (A + A.T)


def random_spd(rng, n, spread=1.0):
    """SPD matrix with log-eigenvalues uniform in ``[-spread, spread]``."""
    Q = random_orthogonal(rng, n)
    w = np.exp(rng.uniform(-spread, spread, n))
    return (Q * w) @ Q.T


def random_spd_cond(rng, n, cond=1e4):
    """SPD matrix with condition number at most ``cond``."""
    return random_spd(rng, n, 0.5 * np.log(cond))


def random_skew(rng, n, scale=1.0):
    return skew(rng.standard_normal((n, n)) * scale)


def cap_angle(V, max_angle):
    """Rescale a skew matrix so its largest rotation angle is <= max_angle."""
    a = np.max(np.abs(np.linalg.eigvals(V).imag), initial=0.0)
    return V if a <= max_angle else V * (max_angle / a)


def random_rotation(rng, n, max_angle=ROT_MAX_ANGLE, scale=1.0):
    return rot_exp(cap_angle(random_skew(rng, n, scale), max_angle))


def max_rotation_angle(R):
    return float(np.max(rotation_angles(R)))


def tangent_batch(group, rng, N, spread=1.0):
    """``exp_E`` of ``N`` random tangent vectors with entry scale ``spread``."""
    if isinstance(group, EuclideanGroup):
        return rng.standard_normal((N,) + group.shape) * spread
    if isinstance(group, SpdGroup):
        n = group.metric.dim
        return np.array([group.exp_identity(random_sym(rng, n, spread)) for _ in range(N)])
    if isinstance(group, RotationGroup):
        n = group.n
        return np.array([random_rotation(rng, n, ROT_MAX_ANGLE, spread) for _ in range(N)])
    raise UnsupportedBackend(f"no synthetic batches for {group!r}")


def synthetic_batch(group, rng, N, spread=1.0, center=None, seed=None):
    """Batch around ``center``: Gaussian samples where an exact sampler exists
    (using ``seed``), otherwise left-translated :func:`tangent_batch`."""
    from . import gaussian

    center = group.identity if center is None else np.asarray(center, dtype=float)
    if seed is not None:
        try:
            return gaussian.sample(gaussian.GaussianParams(group, center, spread), N, seed)
        except UnsupportedBackend:
            pass
    return group.compose(center, tangent_batch(group, rng, N, spread))


def random_center(group, rng, spread=0.5):
    """A random group element near the neutral element."""
    return tangent_batch(group, rng, 1, spread)[0]


__all__ = [
    "random_orthogonal",
    "random_sym",
    "random_spd",
    "random_spd_cond",
    "random_skew",
    "cap_angle",
    "random_rotation",
    "max_rotation_angle",
    "tangent_batch",
    "synthetic_batch",
    "random_center",
]
