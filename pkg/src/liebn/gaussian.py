"""Riemannian Gaussian distributions on pullback-Euclidean Lie groups.

The density is ``exp(-dist(X, M)^2 / (2 sigma^2))`` up to a normalizing
constant that is never computed. When the metric is pulled back from a
Euclidean space by a chart ``f`` (LEM with the Frobenius inner product,
theta-LCM, the Euclidean group itself) this is the image under ``f^{-1}`` of
an isotropic Gaussian centered at ``f(M)``, which gives an exact sampler.

Random streams come from the counter-based Philox generator; independent
streams for the same seed are obtained by jumping the counter.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import matkernels as mk
from .errors import InvalidInput, UnsupportedBackend
from .groups import EuclideanGroup, LieGroup, SpdGroup

RNG_NAME = "philox4x64"


@dataclass(frozen=True)
class GaussianParams:
    """Mean ``M``, spread ``sigma > 0`` and Lie-group backend."""

    group: LieGroup
    mean: np.ndarray
    sigma: float

    def __post_init__(self):
        if not isinstance(self.group, LieGroup):
            raise UnsupportedBackend(f"{self.group!r} is not a Lie-group backend")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidInput("sigma must be positive and finite")
        mean = np.asarray(self.mean, dtype=float)
        if mean.shape != self.group.point_shape:
            raise InvalidInput(f"mean has shape {mean.shape}, expected {self.group.point_shape}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sigma", float(self.sigma))


@dataclass
class SampleReport:
    n_samples: int
    mean: list
    variance: float
    seed: int
    rng: str = RNG_NAME
    checks: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def log_density_unnorm(p, X):
    """``-dist(X, M)^2 / (2 sigma^2)``; ``X`` may be a batch."""
    X = np.asarray(X, dtype=float)
    if X.shape == p.group.point_shape:
        return -p.group.distance(X, p.mean) ** 2 / (2.0 * p.sigma**2)
    return -p.group.sq_dist(p.group.as_batch(X), p.mean) / (2.0 * p.sigma**2)


# ---------------------------------------------------------------------------
# codomain charts


class _Chart:
    """Isometry onto a Euclidean space with an orthonormal basis.

    ``basis`` has shape ``(k, *point_shape)`` and is orthonormal for the
    codomain inner product ``weight * <A, B>_F``.
    """

    def __init__(self, forward, inverse, basis, weight):
        self.forward = forward
        self.inverse = inverse
        self.basis = basis
        self.weight = weight

    @property
    def ndof(self):
        return len(self.basis)

    def coords(self, Y):
        axes = tuple(range(1, self.basis.ndim))
        return self.weight * np.tensordot(Y, self.basis, axes=(axes, axes))

    def point(self, c):
        return np.tensordot(c, self.basis, axes=1)


def _sym_basis(n):
    out = []
    for i in range(n):
        E = np.zeros((n, n))
        E[i, i] = 1.0
        out.append(E)
    for i in range(n):
        for j in range(i):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0 / np.sqrt(2.0)
            out.append(E)
    return np.array(out)


def _tril_basis(n):
    out = []
    for i in range(n):
        for j in range(i + 1):
            E = np.zeros((n, n))
            E[i, j] = 1.0
            out.append(E)
    return np.array(out)


def chart_for(group):
    """Euclidean chart of a sampling-capable backend.

    Raises
    ------
    UnsupportedBackend
        For theta-AIM, SO(n), LEM with ``(alpha, beta) != (1, 0)`` and
        Euclidean groups with a trace term.
    """
    if isinstance(group, EuclideanGroup):
        if group.beta != 0.0:
            raise UnsupportedBackend("sampling needs an isotropic Euclidean metric (beta = 0)")
        w = group.alpha * group.scale_factor
        k = int(np.prod(group.shape))
        basis = np.eye(k).reshape((k,) + group.shape) / np.sqrt(w)
        ident = lambda X: np.asarray(X, dtype=float)  # noqa: E731
        return _Chart(ident, ident, basis, w)
    if isinstance(group, SpdGroup):
        m = group.metric
        if m.family == "LEM":
            if (m.alpha, m.beta) != (1.0, 0.0):
                raise UnsupportedBackend("LEM sampling is only implemented for (alpha, beta) = (1, 0)")
            return _Chart(group.chart, group.chart_inverse, _sym_basis(m.dim), 1.0)
        if m.family == "LCM":
            t = abs(m.theta)
            return _Chart(group.chart, group.chart_inverse, t * _tril_basis(m.dim), 1.0 / t**2)
    raise UnsupportedBackend(f"no exact Gaussian sampler for {group!r}")


def _generator(seed, stream=0):
    bits = np.random.Philox(int(seed))
    if stream:
        bits = bits.jumped(int(stream))
    return np.random.Generator(bits)


def sample(p, n, seed, stream=0):
    """Draw ``n`` points from the Gaussian ``p``.

    Parameters
    ----------
    p : GaussianParams
    n : int
        Number of samples.
    seed : int
        Philox key; identical seeds give identical samples.
    stream : int, optional
        Counter jump selecting an independent stream for the same seed.

    Returns
    -------
    ndarray, shape (n, *point_shape)
    """
    if int(n) != n or n < 1:
        raise InvalidInput("n must be a positive integer")
    chart = chart_for(p.group)
    z = _generator(seed, stream).standard_normal((int(n), chart.ndof))
    Y = chart.forward(p.mean) + p.sigma * chart.point(z)
    return chart.inverse(Y)


def codomain_coords(group, X):
    """Orthonormal codomain coordinates of a batch."""
    chart = chart_for(group)
    return chart.coords(chart.forward(group.as_batch(X)))


def analytic_variance(p):
    """Expected Frechet variance ``k sigma^2`` (``k`` codomain dimensions)."""
    return chart_for(p.group).ndof * p.sigma**2


def summarize(p, samples, seed):
    g = p.group
    M = g.frechet_mean(samples)
    return SampleReport(len(samples), np.asarray(M).tolist(), g.frechet_variance(samples, M), int(seed))


# ---------------------------------------------------------------------------
# Monte-Carlo checks


def check_mean(p, n=20000, seed=0, n_se=3.0):
    """Empirical Frechet mean within ``n_se`` Monte-Carlo standard errors of M.

    The standard error of the mean's displacement is ``sqrt(v^2 / n)`` with
    ``v^2`` the empirical Frechet variance.
    """
    X = sample(p, n, seed)
    rep = summarize(p, X, seed)
    shift = p.group.distance(np.array(rep.mean), p.mean)
    se = np.sqrt(rep.variance / n)
    ratio = rep.variance / analytic_variance(p)
    rep.checks = {
        "mean_shift": shift,
        "standard_error": se,
        "variance_ratio": ratio,
        "passed": bool(shift < n_se * se and 0.95 <= ratio <= 1.05),
    }
    return rep


def verify_homogeneity(p, B, n=20000, seed=0, n_se=3.0):
    """Left translation by ``B`` moves the Gaussian to mean ``B (.) M``.

    Passes when the translated empirical mean lies within ``n_se`` standard
    errors of ``B (.) M`` and the translated variance is within 5% of
    ``k sigma^2``.
    """
    g = p.group
    B = np.asarray(B, dtype=float)
    X = sample(p, n, seed)
    Y = g.compose(B, X)
    rep = summarize(p, Y, seed)
    target = g.compose(B, p.mean)
    shift = g.distance(np.array(rep.mean), target)
    se = np.sqrt(rep.variance / n)
    ratio = rep.variance / analytic_variance(p)
    rep.checks = {
        "mean_shift": shift,
        "standard_error": se,
        "variance_ratio": ratio,
        "passed": bool(shift < n_se * se and 0.95 <= ratio <= 1.05),
    }
    return rep


def ks_two_sample(group, X, Y, alpha=0.01):
    """Per-coordinate two-sample KS tests with Bonferroni correction."""
    cx = codomain_coords(group, X)
    cy = codomain_coords(group, Y)
    pvals = np.array([stats.ks_2samp(cx[:, j], cy[:, j]).pvalue for j in range(cx.shape[1])])
    return pvals, bool(np.min(pvals) > alpha / len(pvals))


def verify_scaling_law(p, s, n=20000, seed=0, alpha=0.01):
    """Dispersion scaling ``phi_s`` maps N(E, sigma^2) to N(E, s^2 sigma^2).

    Checks the empirical variance ratio against ``s^2`` (5% band) and runs a
    per-coordinate KS comparison of ``phi_s`` samples with a fresh stream
    drawn from N(E, s^2 sigma^2).
    """
    g = p.group
    if g.distance(p.mean, g.identity) > 1e-12:
        raise InvalidInput("scaling law is stated for Gaussians centered at the neutral element")
    if s == 0:
        raise InvalidInput("s must be nonzero")
    X = sample(p, n, seed)
    Y = g.scale_dispersion(X, s)
    E = g.identity
    v0 = g.frechet_variance(X, E)
    v1 = g.frechet_variance(Y, E)
    ratio = v1 / v0
    fresh = sample(GaussianParams(g, E, abs(s) * p.sigma), n, seed, stream=1)
    pvals, ks_ok = ks_two_sample(g, Y, fresh, alpha)
    M = g.frechet_mean(Y)
    rep = SampleReport(n, np.asarray(M).tolist(), g.frechet_variance(Y, M), int(seed))
    rep.checks = {
        "s": float(s),
        "variance_ratio": ratio,
        "variance_ratio_over_s2": ratio / s**2,
        "ks_min_pvalue": float(np.min(pvals)),
        "ks_threshold": alpha / len(pvals),
        "passed": bool(0.95 * s**2 <= ratio <= 1.05 * s**2 and ks_ok),
    }
    return rep


def mle_probe(p, n=2000, seed=0, radius=0.05, trials=50):
    """First-order optimality of the sample Frechet mean.

    Compares the sum of squared distances at the sample mean with its value
    at ``trials`` points ``exp_Mhat(radius * U)`` for random unit tangents
    ``U``, built through the isometric chart. Returns the smallest increase
    (positive when the sample mean wins every comparison).
    """
    g = p.group
    chart = chart_for(g)
    X = sample(p, n, seed)
    Mhat = g.frechet_mean(X)
    base = float(np.sum(g.sq_dist(X, Mhat)))
    u = _generator(seed, stream=2).standard_normal((trials, chart.ndof))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    Y0 = chart.forward(Mhat)
    gaps = []
    for c in u:
        Q = chart.inverse(Y0 + radius * chart.point(c))
        gaps.append(float(np.sum(g.sq_dist(X, Q))) - base)
    return min(gaps)


def density_shell_correlation(p, n=50000, seed=0, bins=25, min_count=50):
    """Spearman correlation of shell log-density against the model.

    Sample distances to ``M`` are binned into shells; the empirical density
    in a shell is its count divided by the shell volume (proportional to
    ``r_hi^k - r_lo^k`` in the ``k``-dimensional codomain). Shells with fewer
    than ``min_count`` samples are dropped.
    """
    g = p.group
    k = chart_for(g).ndof
    X = sample(p, n, seed)
    r = np.sqrt(g.sq_dist(X, p.mean))
    edges = np.linspace(0.0, np.quantile(r, 0.999), bins + 1)
    counts, _ = np.histogram(r, edges)
    keep = counts >= min_count
    vol = edges[1:] ** k - edges[:-1] ** k
    emp = np.log(counts[keep] / vol[keep])
    mid = 0.5 * (edges[1:] + edges[:-1])[keep]
    model = -(mid**2) / (2.0 * p.sigma**2)
    return float(stats.spearmanr(emp, model).statistic)


def concentration(p, n=100, seed=0):
    """Largest distance of ``n`` samples to the mean."""
    X = sample(p, n, seed)
    return float(np.sqrt(np.max(p.group.sq_dist(X, p.mean))))


__all__ = [
    "GaussianParams",
    "SampleReport",
    "log_density_unnorm",
    "chart_for",
    "sample",
    "codomain_coords",
    "analytic_variance",
    "summarize",
    "check_mean",
    "verify_homogeneity",
    "verify_scaling_law",
    "ks_two_sample",
    "mle_probe",
    "density_shell_correlation",
    "concentration",
]
