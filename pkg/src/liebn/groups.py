"""Lie-group backends consumed by the batch-normalization layers.

A backend bundles the few operations LieBN needs: neutral element, group
product and inverse, the Riemannian log/exp at the neutral element, the
geodesic distance and Frechet statistics. Points are numpy arrays and
batches stack them along a leading axis.
"""

from abc import ABC, abstractmethod

import numpy as np

from . import rotations, spd
from .errors import InvalidInput


class LieGroup(ABC):
    """Lie group with a left-invariant metric."""

    #: whether the Frechet mean has a closed form (no iterative solver)
    closed_form_mean = True

    @property
    @abstractmethod
    def identity(self):
        ...

    @property
    def point_shape(self):
        return self.identity.shape

    @abstractmethod
    def compose(self, a, b):
        """``a (.) b``; ``b`` may be a batch."""

    @abstractmethod
    def inverse(self, a):
        ...

    @abstractmethod
    def log_identity(self, x):
        """Riemannian log at the neutral element; ``x`` may be a batch."""

    @abstractmethod
    def exp_identity(self, v):
        ...

    @abstractmethod
    def distance(self, a, b):
        ...

    def sq_dist(self, points, b):
        """Squared distances of every point in a batch to ``b``."""
        return np.array([self.distance(p, b) ** 2 for p in points])

    @abstractmethod
    def frechet_mean(self, points, weights=None):
        ...

    def frechet_variance(self, points, mean, weights=None):
        points = self.as_batch(points)
        w = np.full(len(points), 1.0 / len(points)) if weights is None else np.asarray(weights, float)
        return float(np.dot(w, self.sq_dist(points, mean)))

    @abstractmethod
    def wfm_pair(self, p1, p2, gamma):
        """Weighted mean with weight ``gamma`` on ``p1``."""

    def as_batch(self, points):
        points = np.asarray(points, dtype=float)
        shape = self.point_shape
        if points.shape == shape:
            points = points[None]
        if points.ndim != len(shape) + 1 or points.shape[1:] != shape or len(points) == 0:
            raise InvalidInput(f"expected a non-empty batch of {shape} points, got {points.shape}")
        return points

    def scale_dispersion(self, points, s):
        """Dispersion scaling ``exp_E(s log_E(x))``."""
        return self.exp_identity(s * self.log_identity(points))


class EuclideanGroup(LieGroup):
    """Additive group of real arrays with a scaled O(n)-invariant metric.

    The squared norm is ``scale * (alpha |X|^2 + beta tr(X)^2)``; the trace
    term applies only to square matrix points.
    """

    def __init__(self, shape=(1,), alpha=1.0, beta=0.0, scale=1.0):
        self.shape = tuple(int(k) for k in np.atleast_1d(shape))
        if beta != 0.0 and (len(self.shape) != 2 or self.shape[0] != self.shape[1]):
            raise InvalidInput("beta requires square matrix points")
        if beta != 0.0:
            spd.check_alpha_beta(alpha, beta, self.shape[0])
        if alpha <= 0 or scale <= 0:
            raise InvalidInput("alpha and scale must be positive")
        self.alpha, self.beta, self.scale_factor = float(alpha), float(beta), float(scale)

    def describe(self):
        return {"family": "euclidean", "shape": list(self.shape), "alpha": self.alpha,
                "beta": self.beta, "scale": self.scale_factor}

    def __repr__(self):
        return f"EuclideanGroup(shape={self.shape}, alpha={self.alpha}, beta={self.beta}, scale={self.scale_factor})"

    @property
    def identity(self):
        return np.zeros(self.shape)

    def compose(self, a, b):
        return a + b

    def inverse(self, a):
        return -a

    def log_identity(self, x):
        return np.asarray(x, dtype=float)

    def exp_identity(self, v):
        return np.asarray(v, dtype=float)

    def _sq_norm(self, X):
        axes = tuple(range(-len(self.shape), 0))
        out = self.alpha * np.sum(X * X, axis=axes)
        if self.beta:
            out = out + self.beta * np.trace(X, axis1=-2, axis2=-1) ** 2
        return self.scale_factor * out

    def distance(self, a, b):
        return float(np.sqrt(self._sq_norm(np.asarray(a) - np.asarray(b))))

    def sq_dist(self, points, b):
        return self._sq_norm(points - b)

    def frechet_mean(self, points, weights=None):
        points = self.as_batch(points)
        if weights is None:
            return points.mean(axis=0)
        return np.tensordot(np.asarray(weights, float), points, axes=1)

    def wfm_pair(self, p1, p2, gamma):
        if not 0.0 <= gamma <= 1.0:
            raise InvalidInput("gamma must lie in [0, 1]")
        return (1.0 - gamma) * p2 + gamma * p1


class SpdGroup(LieGroup):
    """SPD matrices under one of the deformed metric families."""

    def __init__(self, metric):
        self.metric = metric
        self.closed_form_mean = metric.family != "AIM"

    def describe(self):
        m = self.metric
        return {"family": "spd-" + m.family.lower(), "dim": m.dim, "theta": m.theta,
                "alpha": m.alpha, "beta": m.beta}

    def __repr__(self):
        return f"SpdGroup({self.metric!r})"

    @property
    def identity(self):
        return np.eye(self.metric.dim)

    def compose(self, a, b):
        return spd.group_compose(self.metric, a, b)

    def inverse(self, a):
        return spd.group_inverse(self.metric, a)

    def log_identity(self, x):
        return spd.log_at(self.metric, self.identity, x)

    def exp_identity(self, v):
        return spd.exp_at(self.metric, self.identity, v)

    def distance(self, a, b):
        return spd.geodesic_distance(self.metric, a, b)

    def sq_dist(self, points, b):
        return spd._dist_sq(self.metric, points, b)

    def frechet_mean(self, points, weights=None):
        return spd.frechet_mean(self.metric, points, weights)

    def frechet_variance(self, points, mean, weights=None):
        return spd.frechet_variance(self.metric, points, mean, weights)

    def wfm_pair(self, p1, p2, gamma):
        return spd.wfm_pair(self.metric, p1, p2, gamma)

    def scale_dispersion(self, points, s):
        if self.metric.family == "AIM":
            return super().scale_dispersion(points, s)
        # flat codomain with the chart sending E to 0
        return self.chart_inverse(s * self.chart(points))

    # pullback structure -------------------------------------------------

    def chart(self, x):
        return spd.pullback_map(self.metric, x)

    def chart_inverse(self, y):
        return spd.pullback_inverse(self.metric, y)

    def codomain(self):
        """The group the chart maps isometrically onto.

        AIM: SPD under (alpha, beta)-AIM scaled by 1/theta^2. LEM: symmetric
        matrices with the (alpha, beta) inner product. LCM: lower-triangular
        matrices with the Frobenius product scaled by 1/theta^2.
        """
        m = self.metric
        t2 = m.theta**2
        n = m.dim
        if m.family == "AIM":
            return SpdGroup(spd.SpdMetric("AIM", n, 1.0, m.alpha / t2, m.beta / t2))
        if m.family == "LEM":
            return EuclideanGroup((n, n), m.alpha, m.beta)
        return EuclideanGroup((n, n), scale=1.0 / t2)


class RotationGroup(LieGroup):
    """SO(n) with its bi-invariant Frobenius metric."""

    closed_form_mean = False

    def __init__(self, n):
        if int(n) != n or n < 2:
            raise InvalidInput("SO(n) requires n >= 2")
        self.n = int(n)

    def describe(self):
        return {"family": "so", "dim": self.n}

    def __repr__(self):
        return f"RotationGroup({self.n})"

    @property
    def identity(self):
        return np.eye(self.n)

    def compose(self, a, b):
        return a @ b

    def inverse(self, a):
        return np.swapaxes(a, -1, -2)

    def log_identity(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 3:
            return np.array([rotations.rot_log(r) for r in x])
        return rotations.rot_log(x)

    def exp_identity(self, v):
        v = np.asarray(v, dtype=float)
        if v.ndim == 3:
            return np.array([rotations.rot_exp(a) for a in v])
        return rotations.rot_exp(v)

    def distance(self, a, b):
        return rotations.so_distance(a, b)

    def frechet_mean(self, points, weights=None):
        return rotations.so_frechet_mean(self.as_batch(points), weights)

    def wfm_pair(self, p1, p2, gamma):
        if not 0.0 <= gamma <= 1.0:
            raise InvalidInput("gamma must lie in [0, 1]")
        if gamma == 0.0:
            return np.array(p2, dtype=float)
        if gamma == 1.0:
            return np.array(p1, dtype=float)
        return rotations.so_geodesic(p2, p1, gamma)


def group_from_dict(d):
    """Rebuild a backend from the record produced by ``describe()``."""
    family = d["family"]
    if family == "euclidean":
        return EuclideanGroup(tuple(d["shape"]), d.get("alpha", 1.0), d.get("beta", 0.0), d.get("scale", 1.0))
    if family == "so":
        return RotationGroup(d["dim"])
    if family.startswith("spd-"):
        metric = spd.SpdMetric(family[4:], d["dim"], d.get("theta", 1.0), d.get("alpha", 1.0), d.get("beta", 0.0))
        return SpdGroup(metric)
    raise InvalidInput(f"unknown backend family {family!r}")
