"""Geometry of the special orthogonal group SO(n).

The metric is the bi-invariant one induced by the Frobenius inner product on
the Lie algebra of skew-symmetric matrices. Tangent vectors at ``R`` are
represented in the Lie algebra (``V`` skew, ambient vector ``R V``) unless a
function says otherwise.

SO(3) uses Rodrigues closed forms; other dimensions go through
scaling-and-squaring for the exponential and a real Schur decomposition for
the logarithm.
"""

import numpy as np
import scipy.linalg

from .errors import (
    BallError,
    ConvergenceError,
    CutLocusError,
    InvalidInput,
    RetractError,
)

CUT_TOL = 1e-6
ORTHO_TOL = 1e-9
DRIFT_TOL = 1e-6


def skew(A):
    A = np.asarray(A, dtype=float)
    return 0.5 * (A - np.swapaxes(A, -1, -2))


def hat(w):
    """3-vector to 3x3 skew matrix."""
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(V):
    return np.array([V[2, 1], V[0, 2], V[1, 0]])


def as_rotation(R):
    """Validate a rotation matrix.

    Small drift from orthogonality (below ``1e-6``) is removed by projecting
    onto SO(n) with a sign-fixed QR factorization; larger deviations and
    reflections are rejected.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or not np.all(np.isfinite(R)):
        raise InvalidInput("rotation must be a finite square matrix")
    n = R.shape[0]
    drift = np.max(np.abs(R.T @ R - np.eye(n)))
    if drift > DRIFT_TOL:
        raise InvalidInput(f"matrix is not orthogonal (drift {drift:.2e})")
    if drift > ORTHO_TOL:
        R = _qr_q(R)
    if np.linalg.det(R) < 0:
        raise InvalidInput("matrix has determinant -1")
    return R


def _qr_q(A):
    Q, T = np.linalg.qr(A)
    return Q * np.where(np.diag(T) < 0, -1.0, 1.0)


def as_skew(V):
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise InvalidInput("skew matrix must be square")
    if np.max(np.abs(V + V.T), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(V))):
        raise InvalidInput("matrix is not skew-symmetric")
    return skew(V)


# ---------------------------------------------------------------------------
# SO(3) closed forms


def so3_exp(V):
    """Rodrigues formula for a 3x3 skew matrix."""
    w = vee(V)
    t = np.linalg.norm(w)
    if t < 1e-8:
        a = 1.0 - t**2 / 6.0
        b = 0.5 - t**2 / 24.0
    else:
        a = np.sin(t) / t
        b = (1.0 - np.cos(t)) / t**2
    return np.eye(3) + a * V + b * (V @ V)


def so3_log(R):
    """Logarithm of a 3x3 rotation with angle below pi."""
    c = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    t = np.arccos(c)
    if t > np.pi - CUT_TOL:
        raise CutLocusError(f"rotation angle {t:.9f} is at the cut locus")
    if t < 1e-8:
        return skew(R) * (1.0 + t**2 / 6.0)
    if t < 3.0:
        return skew(R) * (t / np.sin(t))
    # near pi the skew part vanishes; recover the axis from the symmetric part
    B = 0.5 * (R + R.T) - c * np.eye(3)
    k = int(np.argmax(np.diag(B)))
    axis = B[:, k] / np.sqrt(B[k, k] * (1.0 - c))
    if np.dot(axis, vee(skew(R))) < 0:
        axis = -axis
    return hat(t * axis / np.linalg.norm(axis))


# ---------------------------------------------------------------------------
# generic dimension


def skew_expm(V):
    """Matrix exponential of a skew matrix by scaling and squaring."""
    return _qr_q(scipy.linalg.expm(V)) if V.shape[0] > 1 else np.eye(1)


def rotation_angles(R):
    """Rotation angles in [0, pi] of the planes of ``R``."""
    return np.abs(np.angle(np.linalg.eigvals(R)))


def rotation_logm(R):
    """Principal logarithm of a rotation via its real Schur form.

    ``R`` is normal, so its real Schur form is block diagonal with 2x2
    planar rotations and 1x1 blocks equal to +1 (a -1 block means angle pi).
    """
    n = R.shape[0]
    T, Z = scipy.linalg.schur(R, output="real")
    Lt = np.zeros((n, n))
    i = 0
    while i < n:
        if i + 1 < n and abs(T[i + 1, i]) > 1e-300:
            a = 0.5 * (T[i, i] + T[i + 1, i + 1])
            s = 0.5 * (T[i + 1, i] - T[i, i + 1])
            phi = np.arctan2(s, a)
            if abs(phi) > np.pi - CUT_TOL:
                raise CutLocusError("rotation angle is at the cut locus")
            Lt[i + 1, i] = phi
            Lt[i, i + 1] = -phi
            i += 2
        else:
            if T[i, i] < 0:
                raise CutLocusError("rotation angle is at the cut locus")
            i += 1
    return skew(Z @ Lt @ Z.T)


def rot_exp(V):
    V = np.asarray(V, dtype=float)
    if V.shape == (3, 3):
        return so3_exp(V)
    return skew_expm(V)


def rot_log(R):
    R = np.asarray(R, dtype=float)
    if R.shape == (3, 3):
        return so3_log(R)
    return rotation_logm(R)


# ---------------------------------------------------------------------------
# Riemannian operators


def so_log(R, S):
    """Lie-algebra logarithm ``log(R^T S)``; ``so_exp(R, .)`` inverts it."""
    return rot_log(np.asarray(R).T @ np.asarray(S))


def so_exp(R, V):
    """``R exp(V)`` for skew ``V``."""
    return np.asarray(R) @ rot_exp(as_skew(V))


def so_distance(R, S):
    """Geodesic distance ``||log(R^T S)||_F``.

    Stacks of shape ``(k, n, n)`` are treated as points of the product group
    and give ``sqrt(sum_i ||log(R_i^T S_i)||^2)``.
    """
    R = np.asarray(R, dtype=float)
    S = np.asarray(S, dtype=float)
    if R.shape != S.shape:
        raise InvalidInput("rotation shapes differ")
    if R.ndim == 3:
        return float(np.sqrt(sum(so_distance(a, b) ** 2 for a, b in zip(R, S))))
    return float(np.linalg.norm(so_log(R, S)))


def so_geodesic(R, S, t):
    return np.asarray(R) @ rot_exp(t * so_log(R, S))


def so_transport(R, S, H):
    """Parallel transport of the ambient tangent ``H = R V`` from R to S."""
    R, S, H = (np.asarray(a, dtype=float) for a in (R, S, H))
    if not R.shape == S.shape == H.shape:
        raise InvalidInput("shape mismatch")
    return S @ R.T @ H


def so_project(R, U):
    """Lie-algebra part of the projection of ambient ``U`` onto T_R SO(n)."""
    return skew(np.asarray(R).T @ np.asarray(U))


def so_retract(R, H):
    """QR retraction ``qf(R + H)`` with positive triangular diagonal."""
    A = np.asarray(R, dtype=float) + np.asarray(H, dtype=float)
    Q, T = np.linalg.qr(A)
    d = np.diag(T)
    if np.min(np.abs(d)) < 1e-12 * max(1.0, np.max(np.abs(d))):
        raise RetractError("R + H is rank deficient")
    return Q * np.where(d < 0, -1.0, 1.0)


def so_frechet_mean(batch, weights=None, tol=1e-12, maxiter=100):
    """Weighted Karcher mean of rotations.

    The batch must lie in a geodesic ball of radius pi/2 (measured in
    rotation angle) around one of its members; otherwise :class:`BallError`.
    """
    batch = np.asarray(batch, dtype=float)
    if batch.ndim == 2:
        batch = batch[None]
    N = len(batch)
    if N == 0:
        raise InvalidInput("empty batch")
    w = np.full(N, 1.0 / N) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (N,) or np.any(w <= 0) or abs(w.sum() - 1) > 1e-12:
        raise InvalidInput("weights must be positive and sum to one")
    if N == 1:
        return batch[0].copy()
    M = _ball_center(batch)
    for _ in range(maxiter + 1):
        T = sum(wi * so_log(M, Ri) for wi, Ri in zip(w, batch))
        residual = np.linalg.norm(T)
        if residual < tol:
            return M
        M = M @ rot_exp(T)
    raise ConvergenceError("rotation Karcher mean did not converge", last_iterate=M, residual=residual)


def _ball_center(batch):
    radius = []
    for c in batch:
        radius.append(max(np.max(rotation_angles(c.T @ r)) for r in batch))
    k = int(np.argmin(radius))
    if radius[k] >= np.pi / 2:
        raise BallError(f"batch spread {radius[k]:.3f} rad exceeds pi/2")
    return batch[k]
