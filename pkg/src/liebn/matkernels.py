"""Dense symmetric-matrix kernels.

Spectral matrix functions and their Daleckii-Krein derivatives, Cholesky
helpers and the log-Cholesky chart ``clog``. Every function accepts a single
matrix of shape ``(n, n)``; the spectral routines also accept stacks
``(..., n, n)``.
"""

from collections import namedtuple

import numpy as np

from .errors import DomainError, InvalidInput

__all__ = [
    "EigPair",
    "as_sym",
    "as_spd",
    "as_tril",
    "sym_eigendecompose",
    "spd_fun",
    "spd_fun_diff",
    "spd_fun_diff_inv",
    "spd_fun_vjp",
    "loewner_matrix",
    "mexp",
    "mlog",
    "mpow",
    "cholesky",
    "tril_parts",
    "clog",
    "clog_inv",
    "clog_diff",
    "clog_diff_inv",
    "chol_inv_diff",
    "chol_diff",
]

SYM_TOL = 1e-8
PIVOT_TOL = 1e-14

EigPair = namedtuple("EigPair", ["eigvecs", "eigvals"])


def _check_square(a, name="input"):
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidInput(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} has non-finite entries")
    return a


def as_sym(S, name="input"):
    """Validate and symmetrize a (stack of) symmetric matrices.

    Asymmetry up to ``1e-8`` (relative to the matrix scale) is removed by
    taking ``(S + S^T) / 2``; anything larger is rejected.
    """
    S = _check_square(S, name)
    St = np.swapaxes(S, -1, -2)
    scale = max(1.0, float(np.max(np.abs(S))) if S.size else 1.0)
    if np.max(np.abs(S - St), initial=0.0) > SYM_TOL * scale:
        raise InvalidInput(f"{name} is not symmetric")
    return 0.5 * (S + St)


def as_spd(P, name="input"):
    """Validate an SPD matrix (stack); raises :class:`DomainError` if not PD."""
    P = as_sym(P, name)
    if np.min(np.linalg.eigvalsh(P)) <= 0:
        raise DomainError(f"{name} is not positive definite")
    return P


def as_tril(X, name="input"):
    X = _check_square(X, name)
    if np.any(np.triu(X, 1) != 0):
        raise InvalidInput(f"{name} is not lower triangular")
    return X


def sym_eigendecompose(S):
    """Eigendecomposition ``S = U diag(sigma) U^T`` of a symmetric matrix.

    Eigenvalues are sorted in descending order and every eigenvector is
    signed so that its first nonzero component is positive, which makes the
    output a deterministic function of the input.

    Parameters
    ----------
    S : ndarray, shape (..., n, n)
        Symmetric matrix or stack of symmetric matrices.

    Returns
    -------
    EigPair
        ``eigvecs`` of shape (..., n, n) and ``eigvals`` of shape (..., n).
    """
    S = as_sym(S)
    w, U = np.linalg.eigh(S)
    # stable, so tied eigenvalues keep the solver's column order
    order = np.argsort(-w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    U = np.take_along_axis(U, order[..., None, :], axis=-1)
    nonzero = np.abs(U) > 1e-12
    first = np.argmax(nonzero, axis=-2)
    lead = np.take_along_axis(U, first[..., None, :], axis=-2)
    signs = np.where(lead < 0, -1.0, 1.0)
    return EigPair(U * signs, w)


# scalar functions and their derivatives, keyed by name
def _scalar(f, theta=None):
    if f == "exp":
        return np.exp, np.exp
    if f == "log":
        return np.log, lambda x: 1.0 / x
    if f == "pow":
        if theta is None:
            raise InvalidInput("pow requires an exponent")
        t = float(theta)
        return (lambda x: np.power(x, t)), (lambda x: t * np.power(x, t - 1.0))
    if f == "sqrt":
        return _scalar("pow", 0.5)
    if f == "invsqrt":
        return _scalar("pow", -0.5)
    raise InvalidInput(f"unknown matrix function {f!r}")


def _parse_fun(f):
    if isinstance(f, tuple):
        return f[0], f[1]
    return f, None


def _check_domain(w, name, theta):
    if name == "exp":
        return
    if name == "pow" and float(theta).is_integer() and theta >= 0:
        return
    if name == "pow" and float(theta).is_integer():
        if np.any(w == 0):
            raise DomainError("negative integer power of a singular matrix")
        return
    if np.min(w) <= 0:
        raise DomainError(f"matrix {name} requires a positive definite input")


def spd_fun(S, f, theta=None):
    """Spectral matrix function ``U f(Sigma) U^T``.

    Parameters
    ----------
    S : ndarray, shape (..., n, n)
        Symmetric input; must be SPD for ``log`` and non-integer powers.
    f : {'exp', 'log', 'pow', 'sqrt', 'invsqrt'} or tuple ('pow', theta)
    theta : float, optional
        Exponent when ``f == 'pow'``.
    """
    name, t = _parse_fun(f)
    theta = t if theta is None else theta
    fun, _ = _scalar(name, theta)
    U, w = sym_eigendecompose(S)
    _check_domain(w, name, theta if name == "pow" else None)
    return (U * fun(w)[..., None, :]) @ np.swapaxes(U, -1, -2)


def mexp(S):
    return spd_fun(S, "exp")


def mlog(P):
    return spd_fun(P, "log")


def mpow(P, theta):
    if theta == 1:
        return as_sym(P)
    return spd_fun(P, "pow", theta)


def loewner_matrix(w, f, theta=None):
    """First divided differences ``K_ij = (f(w_i) - f(w_j)) / (w_i - w_j)``.

    The diagonal and near-coincident pairs (gap below
    ``1e-10 * max(1, |w_i|)``) use ``f'(w_i)`` instead.
    """
    name, t = _parse_fun(f)
    theta = t if theta is None else theta
    fun, dfun = _scalar(name, theta)
    fw = fun(w)
    dw = w[..., :, None] - w[..., None, :]
    df = fw[..., :, None] - fw[..., None, :]
    tau = 1e-10 * np.maximum(1.0, np.abs(w))[..., :, None]
    close = np.abs(dw) <= tau
    deriv = np.broadcast_to(dfun(w)[..., :, None], dw.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(close, deriv, df / np.where(close, 1.0, dw))
    return K


def _dk_setup(S, f, theta):
    name, t = _parse_fun(f)
    theta = t if theta is None else theta
    U, w = sym_eigendecompose(S)
    _check_domain(w, name, theta if name == "pow" else None)
    return U, loewner_matrix(w, name, theta)


def spd_fun_diff(S, f, V, theta=None):
    """Differential of ``spd_fun(., f)`` at ``S`` applied to symmetric ``V``.

    Computed with the Daleckii-Krein formula ``U [K * (U^T V U)] U^T``.
    """
    U, K = _dk_setup(S, f, theta)
    Ut = np.swapaxes(U, -1, -2)
    V = as_sym(V)
    return U @ (K * (Ut @ V @ U)) @ Ut


def spd_fun_diff_inv(S, f, W, theta=None):
    """Inverse of :func:`spd_fun_diff`: solve ``d f_S (V) = W`` for ``V``."""
    U, K = _dk_setup(S, f, theta)
    if np.any(K == 0):
        raise DomainError("differential is singular at this point")
    Ut = np.swapaxes(U, -1, -2)
    W = as_sym(W)
    return U @ ((Ut @ W @ U) / K) @ Ut


def spd_fun_vjp(S, f, upstream_grad, theta=None):
    """Backpropagate ``upstream_grad = dL/dX`` through ``X = f(S)``.

    The Daleckii-Krein map is self-adjoint for the Frobenius inner product,
    so the gradient ``dL/dS`` has the same form as the forward differential.
    ``S`` must be SPD.
    """
    S = as_spd(S)
    return spd_fun_diff(S, f, upstream_grad, theta)


def cholesky(P):
    """Lower Cholesky factor with strictly positive diagonal."""
    P = as_sym(P)
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise DomainError("matrix is not positive definite") from exc
    if np.min(np.diagonal(L, axis1=-2, axis2=-1) ** 2) < PIVOT_TOL:
        raise DomainError("numerically non-positive Cholesky pivot")
    return L


def tril_parts(L):
    """Split a lower-triangular matrix into strictly-lower and diagonal parts."""
    L = np.asarray(L, dtype=float)
    strict = np.tril(L, -1)
    return strict, L - strict


def _diag(L):
    return np.diagonal(L, axis1=-2, axis2=-1)


def _with_diag(strict, d):
    out = np.array(strict, dtype=float, copy=True)
    idx = np.arange(out.shape[-1])
    out[..., idx, idx] = d
    return out


def clog(P):
    """Log-Cholesky chart: strict part of ``chol(P)`` plus log of its diagonal."""
    L = cholesky(P)
    return _with_diag(np.tril(L, -1), np.log(_diag(L)))


def clog_inv(X):
    """Inverse of :func:`clog`; the diagonal of ``X`` may have any sign."""
    X = _check_square(X)
    L = _with_diag(np.tril(X, -1), np.exp(_diag(X)))
    return L @ np.swapaxes(L, -1, -2)


def chol_inv_diff(L, X):
    """Differential of ``L -> L L^T`` at ``L``: ``X L^T + L X^T``."""
    XLt = X @ np.swapaxes(L, -1, -2)
    return XLt + np.swapaxes(XLt, -1, -2)


def chol_diff(L, V):
    """Inverse of :func:`chol_inv_diff`: the lower-triangular ``X`` with
    ``X L^T + L X^T = V``."""
    Linv = np.linalg.inv(L)
    A = Linv @ V @ np.swapaxes(Linv, -1, -2)
    half = np.tril(A, -1) + 0.5 * _with_diag(np.zeros_like(A), _diag(A))
    return L @ half


def clog_diff(L, X):
    """Differential of the chart ``L -> strict(L) + log diag(L)`` on the
    Cholesky space, applied to lower-triangular ``X``."""
    return _with_diag(np.tril(X, -1), _diag(X) / _diag(L))


def clog_diff_inv(L, Y):
    return _with_diag(np.tril(Y, -1), _diag(Y) * _diag(L))
