"""Deformed Lie-group structures on SPD manifolds.

Three metric families are supported, each with a power deformation
``theta`` and, for AIM and LEM, the O(n)-invariant inner product parameters
``(alpha, beta)``:

* ``LEM``: log-Euclidean; group law ``exp(log P + log Q)``.
* ``AIM``: affine-invariant; group law ``K P K^T`` with ``K = chol(Q)``.
* ``LCM``: log-Cholesky; group law acting on Cholesky factors.

A deformed structure is the pullback of the base one by ``P -> P^theta``,
with the metric scaled by ``1 / theta^2``. Tangent vectors are symmetric
matrices (the ambient representation) everywhere except in
:func:`metric_inner_at` for LCM, which takes Cholesky coordinates.

All points are ``(n, n)`` arrays; batches are ``(N, n, n)`` arrays.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InvalidInput, InvalidMetric
from .matkernels import (
    as_spd,
    as_sym,
    chol_diff,
    chol_inv_diff,
    cholesky,
    clog,
    clog_inv,
    mexp,
    mlog,
    mpow,
    spd_fun,
    spd_fun_diff,
    spd_fun_diff_inv,
)

FAMILIES = ("AIM", "LEM", "LCM")

KARCHER_TOL = 1e-10
KARCHER_MAXITER = 100
KARCHER_HALVINGS = 30
# relative size below which objective differences are rounding noise
KARCHER_RESOLVE = 1e-9
# first-order bound a returned mean must meet when the cap is hit
KARCHER_ACCEPT = 1e-8


@dataclass(frozen=True)
class SpdMetric:
    """Metric family selector with deformation and invariance parameters.

    Parameters
    ----------
    family : {'AIM', 'LEM', 'LCM'}
    dim : int
        Matrix size ``n``.
    theta : float
        Power deformation, nonzero.
    alpha, beta : float
        Inner product ``alpha <V, W> + beta tr(V) tr(W)``; requires
        ``min(alpha, alpha + n beta) > 0``. LCM only accepts ``(1, 0)``.
    """

    family: str
    dim: int
    theta: float = 1.0
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        fam = str(self.family).upper()
        object.__setattr__(self, "family", fam)
        if fam not in FAMILIES:
            raise InvalidMetric(f"unknown SPD metric family {self.family!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidMetric("dim must be a positive integer")
        object.__setattr__(self, "dim", int(self.dim))
        if not np.isfinite(self.theta) or self.theta == 0:
            raise InvalidMetric("theta must be finite and nonzero")
        check_alpha_beta(self.alpha, self.beta, self.dim)
        if fam == "LCM" and (self.alpha, self.beta) != (1.0, 0.0):
            raise InvalidMetric("LCM takes no (alpha, beta); use (1, 0)")

    @property
    def identity(self):
        return np.eye(self.dim)


def check_alpha_beta(alpha, beta, n):
    if not (np.isfinite(alpha) and np.isfinite(beta)):
        raise InvalidMetric("alpha and beta must be finite")
    if min(alpha, alpha + n * beta) <= 0:
        raise InvalidMetric(f"(alpha, beta)=({alpha}, {beta}) violates min(alpha, alpha + n beta) > 0")


def ab_inner(V, W, alpha=1.0, beta=0.0):
    """O(n)-invariant inner product ``alpha <V, W>_F + beta tr(V) tr(W)``."""
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    check_alpha_beta(alpha, beta, V.shape[-1])
    fro = np.sum(V * W, axis=(-2, -1))
    tr = np.trace(V, axis1=-2, axis2=-1) * np.trace(W, axis1=-2, axis2=-1)
    return alpha * fro + beta * tr


def _ab_sq(X, alpha, beta):
    return alpha * np.sum(X * X, axis=(-2, -1)) + beta * np.trace(X, axis1=-2, axis2=-1) ** 2


def _check_dims(m, *mats):
    for A in mats:
        if np.shape(A)[-2:] != (m.dim, m.dim):
            raise InvalidInput(f"expected ({m.dim}, {m.dim}) matrices, got {np.shape(A)}")


def _pw(m, P):
    return P if m.theta == 1 else mpow(P, m.theta)


def _unpw(m, P):
    return P if m.theta == 1 else mpow(P, 1.0 / m.theta)


def _diag(L):
    return np.diagonal(L, axis1=-2, axis2=-1)


def _set_diag(A, d):
    A = np.array(A, dtype=float, copy=True)
    idx = np.arange(A.shape[-1])
    A[..., idx, idx] = d
    return A


# ---------------------------------------------------------------------------
# base (undeformed) operators, written against the points P^theta


def _base_dist_sq(m, P, Q):
    if m.family == "LEM":
        return _ab_sq(mlog(P) - mlog(Q), m.alpha, m.beta)
    if m.family == "LCM":
        D = clog(P) - clog(Q)
        return np.sum(D * D, axis=(-2, -1))
    Qi = spd_fun(Q, "invsqrt")
    lam = np.linalg.eigvalsh(as_sym(Qi @ P @ Qi))
    ll = np.log(lam)
    return m.alpha * np.sum(ll * ll, axis=-1) + m.beta * np.sum(ll, axis=-1) ** 2


def _lcm_compose(Q, P):
    K = cholesky(Q)
    L = cholesky(P)
    C = np.tril(K, -1) + np.tril(L, -1)
    C = _set_diag(C, _diag(K) * _diag(L))
    return C @ np.swapaxes(C, -1, -2)


def _base_compose(m, Q, P):
    if m.family == "LEM":
        return mexp(mlog(P) + mlog(Q))
    if m.family == "LCM":
        return _lcm_compose(Q, P)
    K = cholesky(Q)
    return as_sym(K @ P @ np.swapaxes(K, -1, -2))


def _base_inverse(m, P):
    if m.family == "LEM":
        return mexp(-mlog(P))
    if m.family == "LCM":
        return clog_inv(-clog(P))
    Kinv = np.linalg.inv(cholesky(P))
    return as_sym(Kinv @ np.swapaxes(Kinv, -1, -2))


def _base_log(m, P, Q):
    if m.family == "LEM":
        return spd_fun_diff_inv(P, "log", mlog(Q) - mlog(P))
    if m.family == "LCM":
        L = cholesky(P)
        K = cholesky(Q)
        X = np.tril(K, -1) - np.tril(L, -1)
        X = _set_diag(X, _diag(L) * np.log(_diag(K) / _diag(L)))
        return chol_inv_diff(L, X)
    Ph = spd_fun(P, "sqrt")
    Pih = spd_fun(P, "invsqrt")
    return as_sym(Ph @ mlog(Pih @ Q @ Pih) @ Ph)


def _base_exp(m, P, V):
    if m.family == "LEM":
        return mexp(mlog(P) + spd_fun_diff(P, "log", V))
    if m.family == "LCM":
        L = cholesky(P)
        X = chol_diff(L, V)
        K = np.tril(L, -1) + np.tril(X, -1)
        K = _set_diag(K, _diag(L) * np.exp(_diag(X) / _diag(L)))
        return K @ np.swapaxes(K, -1, -2)
    Ph = spd_fun(P, "sqrt")
    Pih = spd_fun(P, "invsqrt")
    return as_sym(Ph @ mexp(Pih @ V @ Pih) @ Ph)


def _base_inner(m, P, V, W):
    if m.family == "LEM":
        return ab_inner(spd_fun_diff(P, "log", V), spd_fun_diff(P, "log", W), m.alpha, m.beta)
    if m.family == "LCM":
        L = cholesky(P)
        return _lcm_chol_inner(L, chol_diff(L, V), chol_diff(L, W))
    Pinv = np.linalg.inv(P)
    A = Pinv @ V
    B = W @ Pinv
    return m.alpha * np.sum(A * B) + m.beta * np.trace(A) * np.trace(B)


def _lcm_chol_inner(L, X, Y):
    strict = np.sum(np.tril(X, -1) * np.tril(Y, -1))
    return strict + np.sum(_diag(X) * _diag(Y) / _diag(L) ** 2)


# ---------------------------------------------------------------------------
# public operators


def metric_inner_at(m, P, V, W):
    """Riemannian inner product ``g_P(V, W)``.

    For AIM and LEM ``V`` and ``W`` are symmetric. For LCM they are
    lower-triangular Cholesky coordinates: the ambient tangent vector is
    ``X L^T + L X^T`` with ``L = chol(P)``.
    """
    _check_dims(m, P, V, W)
    P = as_spd(P)
    if m.family == "LCM":
        L = cholesky(P)
        if m.theta == 1:
            return float(_lcm_chol_inner(L, np.asarray(V, float), np.asarray(W, float)))
        V = chol_inv_diff(L, np.tril(V))
        W = chol_inv_diff(L, np.tril(W))
    else:
        V, W = as_sym(V), as_sym(W)
    if m.theta == 1:
        return float(_base_inner(m, P, V, W))
    Pt = mpow(P, m.theta)
    dV = spd_fun_diff(P, "pow", V, m.theta)
    dW = spd_fun_diff(P, "pow", W, m.theta)
    return float(_base_inner(m, Pt, dV, dW)) / m.theta**2


def to_ambient(m, P, X):
    """Map LCM Cholesky coordinates ``X`` at ``P`` to a symmetric tangent."""
    return chol_inv_diff(cholesky(P), np.tril(X))


def from_ambient(m, P, V):
    """Inverse of :func:`to_ambient`."""
    return chol_diff(cholesky(P), as_sym(V))


def geodesic_distance(m, P, Q):
    """Geodesic distance ``(1/|theta|) dist_base(P^theta, Q^theta)``."""
    return float(np.sqrt(max(_dist_sq(m, P, Q), 0.0)))


def _dist_sq(m, P, Q):
    _check_dims(m, P, Q)
    d2 = _base_dist_sq(m, _pw(m, P), _pw(m, Q)) / m.theta**2
    return np.maximum(d2, 0.0)


def group_compose(m, Q, P):
    """Group product ``Q (.) P``; left translation by ``Q``."""
    _check_dims(m, Q, P)
    return _unpw(m, _base_compose(m, _pw(m, Q), _pw(m, P)))


def group_inverse(m, P):
    _check_dims(m, P)
    return _unpw(m, _base_inverse(m, _pw(m, P)))


def log_at(m, P, Q):
    """Riemannian logarithm of ``Q`` at ``P`` as a symmetric matrix."""
    _check_dims(m, P, Q)
    if m.theta == 1:
        return _base_log(m, P, Q)
    V = _base_log(m, mpow(P, m.theta), mpow(Q, m.theta))
    return spd_fun_diff_inv(P, "pow", V, m.theta)


def exp_at(m, P, V):
    """Riemannian exponential at ``P`` of the symmetric tangent ``V``."""
    _check_dims(m, P, V)
    V = as_sym(V)
    if m.theta == 1:
        return _base_exp(m, P, V)
    dV = spd_fun_diff(P, "pow", V, m.theta)
    return mpow(_base_exp(m, mpow(P, m.theta), dV), 1.0 / m.theta)


def _weights(N, weights):
    if weights is None:
        return np.full(N, 1.0 / N)
    w = np.asarray(weights, dtype=float)
    if w.shape != (N,) or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
        raise InvalidInput("weights must be positive and sum to one")
    return w


def _as_batch(m, points):
    points = np.asarray(points, dtype=float)
    if points.ndim == 2:
        points = points[None]
    if points.ndim != 3 or len(points) == 0:
        raise InvalidInput("batch must be a non-empty (N, n, n) array")
    _check_dims(m, points)
    return points


def karcher_mean(points, weights, tol=KARCHER_TOL, maxiter=KARCHER_MAXITER, init=None):
    """Weighted AIM Frechet mean by Karcher flow.

    Starts from the log-Euclidean mean and takes unit steps. When a unit step
    falls short of half its predicted decrease of the Frechet objective, the
    step is set by a quadratic fit along the geodesic and then halved until
    the objective does not increase. This keeps the flow convergent for
    widely dispersed batches. Stops when the
    Frobenius norm of the weighted tangent mean at the current iterate drops
    below ``tol``. After ``maxiter`` steps the iterate is still returned if
    that norm is below ``KARCHER_ACCEPT``.
    """
    M = mexp(np.einsum("i,ijk->jk", weights, mlog(points))) if init is None else init

    def evaluate(M):
        Mh = spd_fun(M, "sqrt")
        Mih = spd_fun(M, "invsqrt")
        logs = mlog(Mih @ points @ Mih)
        cost = float(np.dot(weights, np.sum(logs * logs, axis=(-2, -1))))
        return Mh, np.einsum("i,ijk->jk", weights, logs), cost

    Mh, T, cost = evaluate(M)
    step = 1.0
    for _ in range(maxiter):
        residual = np.linalg.norm(Mh @ T @ Mh)
        if residual < tol:
            return M
        # along exp(t T): cost(t) ~ cost - 2 t g + t^2 h
        g = float(np.sum(T * T))
        if g <= KARCHER_RESOLVE * max(cost, 1.0):
            # decrease is below rounding of the cost; keep the fitted step
            M = as_sym(Mh @ mexp(step * T) @ Mh)
            Mh, T, cost = evaluate(M)
            continue
        step = 1.0
        cand = as_sym(Mh @ mexp(T) @ Mh)
        cMh, cT, ccost = evaluate(cand)
        if ccost > cost - g:
            h = ccost - cost + 2.0 * g
            step = min(1.0, max(g / h, 1e-3)) if h > 0 else 1.0
            for _ in range(KARCHER_HALVINGS):
                cand = as_sym(Mh @ mexp(step * T) @ Mh)
                cMh, cT, ccost = evaluate(cand)
                if ccost <= cost:
                    break
                step *= 0.5
        M, Mh, T, cost = cand, cMh, cT, ccost
    residual = np.linalg.norm(Mh @ T @ Mh)
    if residual < KARCHER_ACCEPT:
        return M
    raise ConvergenceError(
        f"Karcher flow did not converge in {maxiter} iterations", last_iterate=M, residual=residual
    )


def _base_mean(m, points, w):
    if m.family == "LEM":
        return mexp(np.einsum("i,ijk->jk", w, mlog(points)))
    if m.family == "LCM":
        return clog_inv(np.einsum("i,ijk->jk", w, clog(points)))
    return karcher_mean(points, w)


def frechet_mean(m, points, weights=None):
    """Weighted Frechet mean of a batch of SPD matrices.

    LEM and LCM use their closed forms; AIM runs Karcher flow in the
    deformed coordinates and raises :class:`ConvergenceError` after
    100 iterations.
    """
    points = _as_batch(m, points)
    w = _weights(len(points), weights)
    if len(points) == 1:
        return points[0].copy()
    return _unpw(m, _base_mean(m, _pw(m, points), w))


def frechet_variance(m, points, mean, weights=None):
    """Weighted sum of squared distances to ``mean`` (default weights 1/N)."""
    points = _as_batch(m, points)
    w = _weights(len(points), weights)
    return float(np.dot(w, _dist_sq(m, points, mean)))


def wfm_pair(m, P1, P2, gamma):
    """Weighted Frechet mean with weight ``gamma`` on ``P1`` and ``1 - gamma`` on ``P2``."""
    if not 0.0 <= gamma <= 1.0:
        raise InvalidInput("gamma must lie in [0, 1]")
    _check_dims(m, P1, P2)
    if gamma == 0.0:
        return np.array(P2, dtype=float)
    if gamma == 1.0:
        return np.array(P1, dtype=float)
    A, B = _pw(m, P1), _pw(m, P2)
    if m.family == "LEM":
        out = mexp(gamma * mlog(A) + (1 - gamma) * mlog(B))
    elif m.family == "LCM":
        out = clog_inv(gamma * clog(A) + (1 - gamma) * clog(B))
    else:
        Bh = spd_fun(B, "sqrt")
        Bih = spd_fun(B, "invsqrt")
        out = as_sym(Bh @ mpow(as_sym(Bih @ A @ Bih), gamma) @ Bh)
    return _unpw(m, out)


# ---------------------------------------------------------------------------
# pullback charts onto the codomain where LieBN is computed


def pullback_map(m, P):
    """Chart onto the codomain: ``P^theta`` (AIM), ``log P`` (LEM),
    ``clog(P^theta)`` (LCM)."""
    if m.family == "LEM":
        return mlog(P)
    if m.family == "LCM":
        return clog(_pw(m, P))
    return _pw(m, P)


def _gram_pow(L, q):
    """``(L L^T)^q`` from the SVD of ``L``; stays positive definite even
    when ``L L^T`` is too ill-conditioned for an eigendecomposition."""
    U, s, _ = np.linalg.svd(L)
    return as_sym((U * s[..., None, :] ** (2.0 * q)) @ np.swapaxes(U, -1, -2))


def pullback_inverse(m, X):
    if m.family == "LEM":
        return mexp(X)
    if m.family == "LCM":
        if m.theta == 1:
            return clog_inv(X)
        X = np.asarray(X, dtype=float)
        L = _set_diag(np.tril(X, -1), np.exp(_diag(X)))
        return _gram_pow(L, 1.0 / m.theta)
    return _unpw(m, X)
