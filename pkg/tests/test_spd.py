"""SPD geometry: closed-form examples, scalar oracles and invariance properties."""

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rand_spd, rand_sym, rel_fro
from liebn import spd
from liebn.errors import ConvergenceError, InvalidMetric
from liebn.spd import SpdMetric

E = np.e
I2 = np.eye(2)


def metric(fam, n=2, theta=1.0, alpha=1.0, beta=0.0):
    return SpdMetric(fam, n, theta, alpha, beta)


# metric parameters ----------------------------------------------------------


def test_alpha_beta_constraint():
    spd.check_alpha_beta(1.0, -0.4, 2)
    with pytest.raises(InvalidMetric):
        spd.check_alpha_beta(1.0, -0.5, 2)
    with pytest.raises(InvalidMetric):
        SpdMetric("AIM", 3, 0.0)
    with pytest.raises(InvalidMetric):
        SpdMetric("LCM", 3, 1.0, 1.0, 0.1)
    with pytest.raises(InvalidMetric):
        SpdMetric("BWM", 3)


def test_ab_inner_examples():
    assert spd.ab_inner(I2, I2) == 2.0
    assert spd.ab_inner(I2, I2, 1.0, 1.0) == 6.0
    V = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert spd.ab_inner(V, I2, 2.0, 0.3) == 0.0


def test_metric_inner_examples():
    assert spd.metric_inner_at(metric("LEM"), I2, np.diag([1.0, 0.0]), np.diag([1.0, 0.0])) == pytest.approx(1.0)
    assert spd.metric_inner_at(metric("AIM"), I2, I2, I2) == pytest.approx(2.0)
    # Cholesky coordinates with L = 2 I
    got = spd.metric_inner_at(metric("LCM"), np.diag([4.0, 4.0]), I2, I2)
    assert got == pytest.approx(0.5)


def test_aim_inner_matches_formula(rng):
    m = metric("AIM", 3, 1.0, 1.5, 0.2)
    P = rand_spd(rng, 3)
    V, W = rand_sym(rng, 3), rand_sym(rng, 3)
    Pi = np.linalg.inv(P)
    want = 1.5 * np.trace(Pi @ V @ Pi @ W) + 0.2 * np.trace(Pi @ V) * np.trace(Pi @ W)
    assert spd.metric_inner_at(m, P, V, W) == pytest.approx(want, rel=1e-12)


# distances, group law, log/exp --------------------------------------------


@pytest.mark.parametrize("fam", ["AIM", "LEM", "LCM"])
def test_distance_to_self(fam, rng):
    P = rand_spd(rng, 3)
    assert spd.geodesic_distance(metric(fam, 3), P, P) == pytest.approx(0.0, abs=1e-7)


def test_distance_examples():
    assert spd.geodesic_distance(metric("LEM"), np.diag([E**2, 1.0]), I2) == pytest.approx(2.0)
    # scalar oracle sqrt(sum (log lambda)^2); sqrt(2) ln 4 = 1.96052
    want = np.sqrt(2) * np.log(4)
    assert spd.geodesic_distance(metric("AIM"), np.diag([4.0, 4.0]), I2) == pytest.approx(want, rel=1e-13)


def test_aim_distance_generalized_eigen_oracle(rng):
    m = metric("AIM", 4, 1.0, 1.0, 0.25)
    P, Q = rand_spd(rng, 4), rand_spd(rng, 4)
    ll = np.log(sla.eigh(Q, P, eigvals_only=True))
    want = np.sqrt(np.sum(ll**2) + 0.25 * np.sum(ll) ** 2)
    assert spd.geodesic_distance(m, P, Q) == pytest.approx(want, rel=1e-10)


@pytest.mark.parametrize("fam", ["AIM", "LEM", "LCM"])
def test_compose_identity(fam, rng):
    P = rand_spd(rng, 3)
    np.testing.assert_allclose(spd.group_compose(metric(fam, 3, 0.5), np.eye(3), P), P, atol=1e-12)


def test_compose_examples():
    np.testing.assert_allclose(spd.group_compose(metric("LEM"), np.diag([3.0, 3.0]), np.diag([2.0, 2.0])),
                               np.diag([6.0, 6.0]))
    np.testing.assert_allclose(spd.group_compose(metric("LCM"), np.diag([9.0, 9.0]), np.diag([4.0, 4.0])),
                               np.diag([36.0, 36.0]))


def test_inverse_examples():
    for fam in ("AIM", "LEM", "LCM"):
        np.testing.assert_allclose(spd.group_inverse(metric(fam), I2), I2)
    np.testing.assert_allclose(spd.group_inverse(metric("LEM"), np.diag([E, 1.0])), np.diag([1 / E, 1.0]))
    np.testing.assert_allclose(spd.group_inverse(metric("AIM"), np.diag([4.0, 9.0])), np.diag([0.25, 1 / 9]))


def test_log_exp_examples():
    m = metric("AIM")
    np.testing.assert_allclose(spd.log_at(m, I2, I2), np.zeros((2, 2)), atol=1e-15)
    np.testing.assert_allclose(spd.log_at(metric("LEM"), I2, np.diag([E**2, 1.0])), np.diag([2.0, 0.0]), atol=1e-14)
    np.testing.assert_allclose(spd.log_at(m, I2, np.diag([4.0, 4.0])), np.log(4) * I2, atol=1e-14)
    np.testing.assert_allclose(spd.exp_at(m, I2, np.zeros((2, 2))), I2)
    np.testing.assert_allclose(spd.exp_at(m, I2, I2), E * I2)


@pytest.mark.parametrize("fam", ["AIM", "LEM", "LCM"])
@pytest.mark.parametrize("theta", [-1.5, 0.5, 1.0])
def test_log_exp_inverse_pair(fam, theta, rng):
    m = metric(fam, 3, theta)
    for _ in range(5):
        P, Q = rand_spd(rng, 3, 20), rand_spd(rng, 3, 20)
        assert rel_fro(spd.exp_at(m, P, spd.log_at(m, P, Q)), Q) < 1e-9


@pytest.mark.parametrize("fam", ["AIM", "LEM", "LCM"])
def test_log_norm_equals_distance(fam, rng):
    # |log_P(Q)|_P = d(P, Q); checks log_at, metric_inner_at and distance jointly
    m = metric(fam, 3, 0.5, *((1.0, 0.2) if fam != "LCM" else (1.0, 0.0)))
    P, Q = rand_spd(rng, 3), rand_spd(rng, 3)
    V = spd.log_at(m, P, Q)
    if fam == "LCM":
        V = spd.from_ambient(m, P, V)
    assert np.sqrt(spd.metric_inner_at(m, P, V, V)) == pytest.approx(spd.geodesic_distance(m, P, Q), rel=1e-8)


# invariances (property tests) ----------------------------------------------

CELLS = [(f, t, ab) for f in ("AIM", "LEM", "LCM") for t in (-1.5, -0.5, 0.5, 1.0, 1.5)
         for ab in ((1.0, 0.0), "n2") if not (f == "LCM" and ab != (1.0, 0.0))]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(CELLS), st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_group_axioms_and_left_invariance(cell, n, seed):
    fam, theta, ab = cell
    alpha, beta = (1.0, 1.0 / n**2) if ab == "n2" else ab
    m = SpdMetric(fam, n, theta, alpha, beta)
    rng = np.random.default_rng(seed)
    A, B, C = (rand_spd(rng, n, 10.0) for _ in range(3))
    En = np.eye(n)
    cmp = lambda x, y: spd.group_compose(m, x, y)  # noqa: E731
    assert rel_fro(cmp(cmp(A, B), C), cmp(A, cmp(B, C))) < 1e-8
    assert rel_fro(cmp(A, spd.group_inverse(m, A)), En) < 1e-8
    assert rel_fro(cmp(En, A), A) < 1e-12
    d0 = spd.geodesic_distance(m, B, C)
    d1 = spd.geodesic_distance(m, cmp(A, B), cmp(A, C))
    assert abs(d1 - d0) < 1e-8 * max(1.0, d0)
    if fam != "AIM":
        d2 = spd.geodesic_distance(m, cmp(B, A), cmp(C, A))
        assert abs(d2 - d0) < 1e-8 * max(1.0, d0)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([-1.5, -0.5, 0.5, 1.5]), st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_lem_deformation_is_isometric(theta, n, seed):
    rng = np.random.default_rng(seed)
    P, Q = rand_spd(rng, n), rand_spd(rng, n)
    a = spd.geodesic_distance(SpdMetric("LEM", n, theta, 1.0, 0.3), P, Q)
    b = spd.geodesic_distance(SpdMetric("LEM", n, 1.0, 1.0, 0.3), P, Q)
    assert a == pytest.approx(b, rel=1e-9)


def _dlog_block(P, V):
    """Frechet derivative of logm via the block-triangular identity."""
    n = len(P)
    Z = np.block([[P, V], [np.zeros((n, n)), P]])
    return np.real(sla.logm(Z))[:n, n:]


def _glem(P, V, W):
    A, B = _dlog_block(P, V), _dlog_block(P, W)
    return 0.5 * np.sum(A * B) - 0.25 * np.sum(np.diag(A) * np.diag(B))


def test_lcm_small_theta_tends_to_lem_inner(rng):
    n = 3
    m = SpdMetric("LCM", n, 1e-4)
    for _ in range(10):
        P = rand_spd(rng, n, 10.0)
        V, W = rand_sym(rng, n), rand_sym(rng, n)
        got = spd.metric_inner_at(m, P, spd.from_ambient(m, P, V), spd.from_ambient(m, P, W))
        want = _glem(P, V, W)
        scale = np.sqrt(_glem(P, V, V) * _glem(P, W, W))
        assert abs(got - want) < 1e-3 * scale


def test_dispersion_scaling_variance(rng):
    m = metric("LEM", 3)
    X = np.array([rand_spd(rng, 3) for _ in range(8)])
    I3 = np.eye(3)
    v = spd.frechet_variance(m, X, I3)
    Y = np.array([spd.exp_at(m, I3, 2.0 * spd.log_at(m, I3, x)) for x in X])
    assert spd.frechet_variance(m, Y, I3) == pytest.approx(4 * v, rel=1e-10)


# Frechet statistics -----------------------------------------------------------


def test_mean_examples():
    A = np.diag([E**2, 1.0])
    B = np.diag([1.0, E**2])
    m = metric("LEM")
    np.testing.assert_allclose(spd.frechet_mean(m, [A]), A)
    M = spd.frechet_mean(m, [A, B])
    np.testing.assert_allclose(M, E * I2)
    assert spd.frechet_variance(m, [A, B], M) == pytest.approx(2.0)
    D = np.diag([4.0, 9.0])
    np.testing.assert_allclose(spd.frechet_mean(metric("AIM"), [D, np.linalg.inv(D)]), I2, atol=1e-12)


def test_variance_of_equal_points(rng):
    P = rand_spd(rng, 3)
    for fam in ("AIM", "LEM", "LCM"):
        assert spd.frechet_variance(metric(fam, 3), [P, P, P], P) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("fam", ["AIM", "LEM", "LCM"])
@pytest.mark.parametrize("theta", [-0.5, 1.0, 1.5])
def test_mean_first_order_condition(fam, theta, rng):
    m = metric(fam, 3, theta)
    X = np.array([rand_spd(rng, 3, 30) for _ in range(6)])
    w = rng.dirichlet(np.ones(6))
    M = spd.frechet_mean(m, X, w)
    T = np.einsum("i,ijk->jk", w, np.array([spd.log_at(m, M, x) for x in X]))
    assert np.linalg.norm(T) < 1e-8


def test_aim_mean_matches_scipy_two_point_midpoint(rng):
    # two-point AIM mean is the matrix geometric mean A # B
    A, B = rand_spd(rng, 4), rand_spd(rng, 4)
    Ah = sla.sqrtm(A).real
    Aih = np.linalg.inv(Ah)
    want = Ah @ sla.sqrtm(Aih @ B @ Aih).real @ Ah
    assert rel_fro(spd.frechet_mean(metric("AIM", 4), [A, B]), want) < 1e-9


def test_karcher_flow_converges_on_dispersed_batch(rng):
    # unit steps overshoot here; the damped flow must still reach the bound
    n = 10
    X = []
    for _ in range(16):
        V = rand_sym(rng, n, 1.0)
        X.append(sla.expm(V))
    M = spd.frechet_mean(metric("AIM", n), np.array(X))
    m = metric("AIM", n)
    T = np.mean([spd.log_at(m, M, x) for x in X], axis=0)
    assert np.linalg.norm(T) < 1e-8


def test_karcher_convergence_error_carries_state(rng):
    X = np.array([rand_spd(rng, 3, 1e3) for _ in range(5)])
    with pytest.raises(ConvergenceError) as info:
        spd.karcher_mean(X, np.full(5, 0.2), tol=0.0, maxiter=2)
    assert info.value.last_iterate.shape == (3, 3)
    assert info.value.residual > 0


def test_wfm_pair_examples():
    P1 = np.diag([4.0, 4.0])
    for fam in ("AIM", "LEM", "LCM"):
        m = metric(fam)
        np.testing.assert_allclose(spd.wfm_pair(m, P1, I2, 0.0), I2)
        np.testing.assert_allclose(spd.wfm_pair(m, P1, I2, 1.0), P1)
    np.testing.assert_allclose(spd.wfm_pair(metric("AIM"), P1, I2, 0.5), 2 * I2)
    np.testing.assert_allclose(spd.wfm_pair(metric("LEM"), P1, I2, 0.5), 2 * I2)


# pullback charts --------------------------------------------------------------


@pytest.mark.parametrize("fam", ["AIM", "LEM", "LCM"])
@pytest.mark.parametrize("theta", [-1.5, 0.5, 1.0])
def test_chart_round_trip(fam, theta, rng):
    m = metric(fam, 3, theta)
    P = rand_spd(rng, 3, 100)
    assert rel_fro(spd.pullback_inverse(m, spd.pullback_map(m, P)), P) < 1e-10


def test_lcm_chart_is_isometry(rng):
    m = metric("LCM", 3, 0.5)
    P, Q = rand_spd(rng, 3), rand_spd(rng, 3)
    d = np.linalg.norm(spd.pullback_map(m, P) - spd.pullback_map(m, Q)) / 0.5
    assert spd.geodesic_distance(m, P, Q) == pytest.approx(d, rel=1e-12)


def test_lcm_chart_inverse_survives_extreme_conditioning():
    m = metric("LCM", 3, 1.5)
    X = np.diag([14.0, 0.0, -14.0])
    X[2, 0] = 3.0
    P = spd.pullback_inverse(m, X)
    assert np.all(np.linalg.eigvalsh(P) > 0)
