"""Batch normalization on Lie groups.

The layer centers a batch at the neutral element by left translation with
the inverse Frechet mean, rescales the dispersion in the tangent space at
the neutral element, and biases towards a learnable group element::

    P_bar = M^{-1} (.) P
    P_hat = exp_E( s / sqrt(v^2 + eps) * log_E(P_bar) )
    P_out = B (.) P_hat

Running statistics follow a geodesic moving average. The momentum variant
keeps separate running pairs for the training and evaluation phases, and
the domain-specific bank routes each sample to a per-domain layer.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, UnknownDomain, UnsupportedBackend
from .groups import LieGroup, SpdGroup, group_from_dict


@dataclass
class BatchStats:
    mean: np.ndarray
    variance: float


def batch_statistics(group, batch):
    """Frechet mean and (1/N-weighted) Frechet variance of a batch."""
    batch = group.as_batch(batch)
    mean = group.frechet_mean(batch)
    return BatchStats(mean, group.frechet_variance(batch, mean))


def normalize_batch(group, batch, mean, variance, bias, scale, eps):
    """Center, scale and bias a batch with the given statistics."""
    batch = group.as_batch(batch)
    centered = group.compose(group.inverse(mean), batch)
    factor = scale / np.sqrt(variance + eps)
    scaled = group.exp_identity(factor * group.log_identity(centered))
    return group.compose(bias, scaled)


def gamma_train(K, k, rho):
    """Training momentum schedule ``1 - rho^(max(K - k, 0) / (K - 1)) + rho``.

    Equals 1 at ``k = 1`` and decays to ``rho`` for ``k >= K``.
    """
    if int(K) != K or K < 2:
        raise InvalidInput("K must be an integer >= 2")
    if not 0.0 < rho <= 1.0:
        raise InvalidInput("rho must lie in (0, 1]")
    if k < 0:
        raise InvalidInput("k must be nonnegative")
    e = max(K - k, 0) / (K - 1)
    if e == 0:
        return float(rho)
    # grouped so that e == 1 gives exactly 1
    return 1.0 - (rho**e - rho)


class LieBatchNorm:
    """Batch normalization layer over a Lie-group backend.

    Parameters
    ----------
    group : LieGroup
        Backend providing the group and metric operations.
    bias : ndarray, optional
        Biasing element ``B``; defaults to the neutral element.
    scale : float
        Nonzero dispersion scale ``s``.
    eps : float
        Positive constant added to the variance under the square root.
    momentum : float
        Weight in [0, 1] of the batch statistics in the running update.
    """

    def __init__(self, group, bias=None, scale=1.0, eps=1e-5, momentum=0.1):
        if not isinstance(group, LieGroup):
            raise UnsupportedBackend(f"{group!r} is not a Lie-group backend")
        if scale == 0 or not np.isfinite(scale):
            raise InvalidInput("scale must be finite and nonzero")
        if not eps > 0:
            raise InvalidInput("eps must be positive")
        if not 0.0 <= momentum <= 1.0:
            raise InvalidInput("momentum must lie in [0, 1]")
        self.group = group
        self.bias = group.identity if bias is None else np.asarray(bias, dtype=float)
        self.scale = float(scale)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.running_mean = group.identity
        self.running_var = 1.0
        self.training = True

    def train(self, mode=True):
        self.training = bool(mode)
        return self

    def eval(self):
        return self.train(False)

    def update_running(self, stats, momentum=None):
        g = self.momentum if momentum is None else momentum
        self.running_mean = self.group.wfm_pair(stats.mean, self.running_mean, g)
        self.running_var = (1.0 - g) * self.running_var + g * stats.variance

    def normalize(self, batch, mean, variance):
        return normalize_batch(self.group, batch, mean, variance, self.bias, self.scale, self.eps)

    def forward(self, batch):
        if self.training:
            stats = batch_statistics(self.group, batch)
            self.update_running(stats)
            return self.normalize(batch, stats.mean, stats.variance)
        return self.normalize(batch, self.running_mean, self.running_var)

    __call__ = forward

    # serialization ------------------------------------------------------

    def state_dict(self):
        return {
            "backend": self.group.describe(),
            "bias": np.asarray(self.bias).tolist(),
            "scale": self.scale,
            "eps": self.eps,
            "momentum": self.momentum,
            "running_mean": np.asarray(self.running_mean).tolist(),
            "running_var": self.running_var,
            "training": self.training,
        }

    @classmethod
    def from_state_dict(cls, d):
        layer = cls(group_from_dict(d["backend"]), np.array(d["bias"]), d["scale"], d["eps"], d["momentum"])
        layer.running_mean = np.array(d["running_mean"], dtype=float)
        layer.running_var = float(d["running_var"])
        layer.training = bool(d.get("training", True))
        return layer


class MomentumLieBatchNorm(LieBatchNorm):
    """LieBN with separate running statistics for training and evaluation.

    In training mode both running pairs are updated from the batch
    statistics, the training pair with the scheduled momentum
    :func:`gamma_train` and the evaluation pair with the fixed ``momentum``;
    the batch is then normalized with the training pair. The step counter
    ``k`` starts at 1 and advances once per training call.

    ``train_momentum`` overrides the schedule with a constant.
    """

    def __init__(self, group, bias=None, scale=1.0, eps=1e-5, momentum=0.1, K=2,
                 domains_per_batch=1, train_momentum=None):
        super().__init__(group, bias, scale, eps, momentum)
        gamma_train(K, 1, 1.0 / domains_per_batch)
        if train_momentum is not None and not 0.0 <= train_momentum <= 1.0:
            raise InvalidInput("train_momentum must lie in [0, 1]")
        self.K = int(K)
        self.rho = 1.0 / domains_per_batch
        self.k = 1
        self.train_momentum = train_momentum
        self.train_running_mean = group.identity
        self.train_running_var = 1.0

    def current_train_momentum(self):
        if self.train_momentum is not None:
            return self.train_momentum
        return gamma_train(self.K, self.k, self.rho)

    def forward(self, batch):
        if not self.training:
            return self.normalize(batch, self.running_mean, self.running_var)
        stats = batch_statistics(self.group, batch)
        gt = self.current_train_momentum()
        self.train_running_mean = self.group.wfm_pair(stats.mean, self.train_running_mean, gt)
        self.train_running_var = (1.0 - gt) * self.train_running_var + gt * stats.variance
        self.update_running(stats)
        self.k += 1
        return self.normalize(batch, self.train_running_mean, self.train_running_var)

    __call__ = forward

    def state_dict(self):
        d = super().state_dict()
        d.update(
            K=self.K,
            rho=self.rho,
            k=self.k,
            train_momentum=self.train_momentum,
            train_running_mean=np.asarray(self.train_running_mean).tolist(),
            train_running_var=self.train_running_var,
        )
        return d

    @classmethod
    def from_state_dict(cls, d):
        layer = cls(group_from_dict(d["backend"]), np.array(d["bias"]), d["scale"], d["eps"], d["momentum"],
                    d["K"], 1.0 / d["rho"], d.get("train_momentum"))
        layer.rho = float(d["rho"])
        layer.k = int(d["k"])
        layer.running_mean = np.array(d["running_mean"], dtype=float)
        layer.running_var = float(d["running_var"])
        layer.train_running_mean = np.array(d["train_running_mean"], dtype=float)
        layer.train_running_var = float(d["train_running_var"])
        layer.training = bool(d.get("training", True))
        return layer


class DomainSpecificLieBatchNorm:
    """Bank of momentum LieBN layers, one per domain, sharing the scale.

    Every domain's bias is the neutral element. ``forward`` normalizes each
    domain's sub-batch with that domain's own statistics.
    """

    def __init__(self, group, domains, scale=1.0, eps=1e-5, momentum=0.1, K=2, domains_per_batch=1,
                 train_momentum=None):
        self.group = group
        self.layers = {
            d: MomentumLieBatchNorm(group, None, scale, eps, momentum, K, domains_per_batch, train_momentum)
            for d in domains
        }
        self._scale = float(scale)

    @property
    def scale(self):
        return self._scale

    @scale.setter
    def scale(self, value):
        if value == 0:
            raise InvalidInput("scale must be nonzero")
        self._scale = float(value)
        for layer in self.layers.values():
            layer.scale = self._scale

    def train(self, mode=True):
        for layer in self.layers.values():
            layer.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def forward(self, batch, domain_ids):
        batch = self.group.as_batch(batch)
        domain_ids = np.asarray(domain_ids)
        if len(domain_ids) != len(batch):
            raise InvalidInput("one domain id per batch element is required")
        unknown = set(domain_ids.tolist()) - set(self.layers)
        if unknown:
            raise UnknownDomain(f"no layer for domains {sorted(map(str, unknown))}")
        out = np.empty_like(batch)
        for d, layer in self.layers.items():
            idx = np.flatnonzero(domain_ids == d)
            if len(idx):
                out[idx] = layer(batch[idx])
        return out

    __call__ = forward


def pullback_forward(layer, batch):
    """Run ``layer`` on an SPD backend through its codomain chart.

    The batch, bias and running mean are mapped by the chart, LieBN runs in
    the codomain group, and the outputs (and updated running mean) are mapped
    back. The layer's running statistics are updated in place when training.
    """
    if not isinstance(layer.group, SpdGroup) or isinstance(layer, MomentumLieBatchNorm):
        raise UnsupportedBackend("pullback evaluation needs a plain LieBatchNorm on an SPD backend")
    g = layer.group
    cod = LieBatchNorm(g.codomain(), g.chart(layer.bias), layer.scale, layer.eps, layer.momentum)
    cod.running_mean = g.chart(layer.running_mean)
    cod.running_var = layer.running_var
    cod.training = layer.training
    out = cod(g.chart(g.as_batch(batch)))
    if layer.training:
        layer.running_mean = g.chart_inverse(cod.running_mean)
        layer.running_var = cod.running_var
    return g.chart_inverse(out)

