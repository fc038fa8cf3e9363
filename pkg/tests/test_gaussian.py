"""Riemannian Gaussian sampler: closed-form values and distributional oracles."""

import numpy as np
import pytest
from scipy import stats

from conftest import rand_spd
from liebn import EuclideanGroup, RotationGroup, SpdGroup, SpdMetric
from liebn import gaussian as gs
from liebn import matkernels as mk
from liebn.errors import InvalidInput, UnsupportedBackend

E = np.e
ALPHA = 1e-3


def lem(n=2):
    return SpdGroup(SpdMetric("LEM", n))


def test_log_density_examples():
    p = gs.GaussianParams(lem(), np.eye(2), 1.0)
    assert gs.log_density_unnorm(p, np.eye(2)) == 0.0
    assert gs.log_density_unnorm(p, np.diag([E**2, 1.0])) == pytest.approx(-2.0)
    q = gs.GaussianParams(lem(), np.eye(2), 2.0)
    X = np.diag([E, 1 / E])
    assert gs.log_density_unnorm(q, X) == pytest.approx(gs.log_density_unnorm(p, X) / 4)
    batch = gs.log_density_unnorm(p, np.array([np.eye(2), np.diag([E**2, 1.0])]))
    np.testing.assert_allclose(batch, [0.0, -2.0])


def test_params_validation():
    with pytest.raises(InvalidInput):
        gs.GaussianParams(lem(), np.eye(2), 0.0)
    with pytest.raises(InvalidInput):
        gs.GaussianParams(lem(), np.eye(3), 1.0)


@pytest.mark.parametrize("group", [
    SpdGroup(SpdMetric("AIM", 2)),
    RotationGroup(3),
    SpdGroup(SpdMetric("LEM", 2, 1.0, 1.0, 0.5)),
    EuclideanGroup((2, 2), beta=0.3),
])
def test_unsupported_backends(group):
    p = gs.GaussianParams(group, group.identity, 1.0)
    with pytest.raises(UnsupportedBackend):
        gs.sample(p, 10, 0)


def test_seeded_determinism():
    p = gs.GaussianParams(SpdGroup(SpdMetric("LCM", 3, 0.5)), np.eye(3), 0.7)
    a = gs.sample(p, 200, 42)
    assert np.array_equal(a, gs.sample(p, 200, 42))
    assert not np.array_equal(a, gs.sample(p, 200, 43))
    assert not np.array_equal(a, gs.sample(p, 200, 42, stream=1))


def test_concentration():
    p = gs.GaussianParams(lem(3), rand_spd(np.random.default_rng(0), 3), 1e-8)
    assert gs.concentration(p, 200, 5) < 1e-6


def test_lem_codomain_entries_are_gaussian():
    sigma = 0.8
    p = gs.GaussianParams(lem(3), np.eye(3), sigma)
    Y = mk.mlog(gs.sample(p, 20000, 7))
    assert stats.kstest(Y[:, 0, 0], "norm", args=(0, sigma)).pvalue > ALPHA
    assert stats.kstest(Y[:, 2, 1], "norm", args=(0, sigma / np.sqrt(2))).pvalue > ALPHA
    np.testing.assert_allclose(Y, np.swapaxes(Y, -1, -2), atol=1e-12)


def test_lcm_codomain_entries_are_gaussian():
    sigma, theta = 0.6, -1.5
    p = gs.GaussianParams(SpdGroup(SpdMetric("LCM", 2, theta)), np.eye(2), sigma)
    X = gs.sample(p, 20000, 3)
    Y = mk.clog(mk.mpow(X, theta))
    s = abs(theta) * sigma
    for i, j in ((0, 0), (1, 0), (1, 1)):
        assert stats.kstest(Y[:, i, j], "norm", args=(0, s)).pvalue > ALPHA


@pytest.mark.parametrize("group", [lem(2), SpdGroup(SpdMetric("LCM", 3, 0.5)), EuclideanGroup((3,), alpha=2.0)])
def test_squared_distance_is_chi_square(group):
    sigma = 0.5
    rng = np.random.default_rng(1)
    M = group.identity if isinstance(group, EuclideanGroup) else rand_spd(rng, group.metric.dim, 4)
    p = gs.GaussianParams(group, M, sigma)
    X = gs.sample(p, 20000, 11)
    r2 = group.sq_dist(X, M) / sigma**2
    k = gs.chart_for(group).ndof
    assert stats.kstest(r2, "chi2", args=(k,)).pvalue > ALPHA


def test_mean_and_variance_lem():
    p = gs.GaussianParams(lem(2), np.eye(2), 1.0)
    rep = gs.check_mean(p, 20000, 0)
    assert rep.checks["passed"]
    assert rep.checks["mean_shift"] < 0.05
    assert 0.95 <= rep.checks["variance_ratio"] <= 1.05
    assert gs.analytic_variance(p) == 3.0


@pytest.mark.parametrize("fam", ["LEM", "LCM"])
def test_homogeneity(fam):
    g = SpdGroup(SpdMetric(fam, 2))
    p = gs.GaussianParams(g, g.identity, 0.5)
    rep = gs.verify_homogeneity(p, np.diag([4.0, 1.0]), 20000, 1)
    assert rep.checks["passed"]
    np.testing.assert_allclose(rep.mean, np.diag([4.0, 1.0]), atol=0.05 * 4)


def test_homogeneity_identity_bias_reduces_to_mean_check():
    p = gs.GaussianParams(lem(2), np.eye(2), 0.5)
    a = gs.verify_homogeneity(p, np.eye(2), 5000, 4)
    b = gs.check_mean(p, 5000, 4)
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-14)


@pytest.mark.parametrize("fam,s", [("LEM", 2.0), ("LEM", -1.0), ("LCM", 0.5), ("LCM", 2.0)])
def test_scaling_law(fam, s):
    g = SpdGroup(SpdMetric(fam, 2, 1.5 if fam == "LCM" else 1.0))
    p = gs.GaussianParams(g, g.identity, 0.4)
    rep = gs.verify_scaling_law(p, s, 20000, 2)
    assert rep.checks["passed"]
    assert rep.checks["variance_ratio"] == pytest.approx(s**2, rel=1e-9)


def test_scaling_law_requires_centered():
    p = gs.GaussianParams(lem(2), np.diag([2.0, 1.0]), 0.4)
    with pytest.raises(InvalidInput):
        gs.verify_scaling_law(p, 2.0, 100, 0)


def test_mle_probe_positive():
    p = gs.GaussianParams(lem(2), np.eye(2), 1.0)
    assert gs.mle_probe(p, 2000, 0) > 0


def test_density_shells_rank_correlate():
    p = gs.GaussianParams(lem(2), np.eye(2), 1.0)
    assert gs.density_shell_correlation(p, 50000, 0) > 0.95


def test_sample_report_serializes():
    p = gs.GaussianParams(lem(2), np.eye(2), 1.0)
    X = gs.sample(p, 100, 9)
    d = gs.summarize(p, X, 9).to_dict()
    assert d["rng"] == "philox4x64" and d["seed"] == 9 and d["n_samples"] == 100
