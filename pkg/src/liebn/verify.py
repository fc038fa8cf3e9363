"""Property-suite registry behind ``liebn verify``.

Every module invariant is registered as a :class:`Property`: a generator of
``(violation, inputs)`` pairs over random trials, a tolerance and a list of
cells (family, dim, ...) it runs on. A cell passes when every violation is
within tolerance; the first failing trial's inputs are kept in the report.

Each cell draws from its own Philox stream keyed by the run seed and the
cell identity, so results do not depend on execution order or threading.
"""

import json
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import batchnorm as bn
from . import gaussian as gs
from . import matkernels as mk
from . import rotations as rot
from . import spd, synth
from .errors import InvalidInput, LieBNError
from .groups import EuclideanGroup, RotationGroup, SpdGroup
from .spd import SpdMetric

SCHEMA_VERSION = "1"
SUITES = ("geometry", "rotation", "liebn", "gaussian")
THETAS = (-1.5, -0.5, 0.5, 1.0, 1.5)
SCALES = (0.5, 1.0, 2.0, -1.0)
# |s| = 2 pushes rotation tangents past the injectivity radius
SO_SCALES = (0.5, 1.0, -1.0)
EPS = 1e-5

# every invariant listed for each module; the registry must cover all of them
INVARIANTS = {
    "matkernels": (
        "eig_invariants",
        "round_trips",
        "pow_equivariance",
        "vjp_finite_difference",
        "cholesky_reconstruction",
    ),
    "spd_geometry": (
        "group_axioms",
        "left_invariance",
        "bi_invariance",
        "deformation",
        "frechet_first_order",
        "mean_homogeneity",
        "dispersion_scaling",
        "pullback_distance",
    ),
    "so_geometry": (
        "exp_log_pair",
        "left_invariance",
        "closed_form_agreement",
        "group_hooks",
        "geodesic_arclength",
        "retraction_order",
        "transport_isometry",
        "frechet_first_order",
    ),
    "liebn_core": (
        "mean_control",
        "variance_control",
        "euclidean_reduction",
        "pullback_equivalence",
        "eval_purity",
        "aim_scaling_power",
        "gamma_train_boundaries",
        "mliebn_equivalence",
        "dsm_partition",
    ),
    "manifold_gaussian": (
        "mean_and_variance",
        "homogeneity",
        "scaling_law",
        "mle_probe",
        "seed_determinism",
        "density_consistency",
        "concentration",
    ),
}


@dataclass(frozen=True)
class Property:
    name: str
    suite: str
    module: str
    invariant: str
    tol: float
    trials: int
    fn: object
    cells: object
    strict: bool = False


REGISTRY = []


def register(name, suite, module, invariant, tol, trials, cells, strict=False):
    def deco(fn):
        REGISTRY.append(Property(name, suite, module, invariant, tol, trials, fn, cells, strict))
        return fn

    return deco


# ---------------------------------------------------------------------------
# helpers


def _rel(a, b):
    d = np.linalg.norm(np.asarray(a) - np.asarray(b))
    nb = np.linalg.norm(b)
    return d / nb if nb > 0 else d


def _per_dim(dims):
    return [{"dim": d} for d in dims]


def _families(*families):
    def cells(dims):
        return [{"family": f, "dim": d} for f in families for d in dims]

    return cells


def _fixed(*cells):
    return lambda dims: [dict(c) for c in cells]


def _ab_grid(family, n):
    return [(1.0, 0.0)] if family == "LCM" else [(1.0, 0.0), (1.0, 1.0 / n**2)]


def _metric_grid(family, n, thetas=THETAS):
    return [SpdMetric(family, n, t, a, b) for t in thetas for a, b in _ab_grid(family, n)]


def _mdesc(m):
    return {"family": m.family, "theta": m.theta, "alpha": m.alpha, "beta": m.beta}


def _backend(name, dim, theta=1.0, ab=(1.0, 0.0)):
    if name == "euclidean":
        return EuclideanGroup((dim,))
    if name == "so":
        return RotationGroup(dim)
    return SpdGroup(SpdMetric(name[4:].upper(), dim, theta, *ab))


def _backend_for_trial(name, dim, i, thetas=THETAS):
    """Cycle through deformations and (alpha, beta) across trials."""
    if not name.startswith("spd-"):
        return _backend(name, dim)
    fam = name[4:].upper()
    grid = _metric_grid(fam, dim, thetas)
    return SpdGroup(grid[i % len(grid)])


def _batch(group, rng, N=16, spread=0.5):
    center = synth.random_center(group, rng, 0.5)
    return group.compose(center, synth.tangent_batch(group, rng, N, spread))


# ---------------------------------------------------------------------------
# matkernels


@register("eig_invariants", "geometry", "matkernels", "eig_invariants", 1e-9, 200, _per_dim)
def _p_eig(rng, cell, trials):
    n = cell["dim"]
    for _ in range(trials):
        S = synth.random_sym(rng, n, 2.0)
        U, w = mk.sym_eigendecompose(S)
        v = max(
            np.max(np.abs(U.T @ U - np.eye(n))),
            _rel((U * w) @ U.T, S),
            float(np.any(np.diff(w) > 0)),
        )
        yield v, {"S": S}


_POWS = (0.5, -0.5, 1.5, -1.5, 2.0)
# pow_{1/theta} is applied first; exponents with |1/theta| > 2 (or negative
# theta with |theta| < 1) square the condition number past what a 1e-10
# round trip can survive at cond 1e4
_ROUND_TRIP_POWS = (0.5, 1.5, -1.5, 2.0, -2.0, 3.0)


@register("round_trips", "geometry", "matkernels", "round_trips", 1e-10, 200, _per_dim)
def _p_round_trips(rng, cell, trials):
    n = cell["dim"]
    for i in range(trials):
        P = synth.random_spd_cond(rng, n, 1e4)
        S = mk.mlog(P)
        t = _ROUND_TRIP_POWS[i % len(_ROUND_TRIP_POWS)]
        v = max(
            _rel(mk.mexp(mk.mlog(P)), P),
            _rel(mk.mlog(mk.mexp(S)), S),
            _rel(mk.clog_inv(mk.clog(P)), P),
            _rel(mk.mpow(mk.mpow(P, 1.0 / t), t), P),
        )
        yield v, {"P": P, "theta": t}


@register("pow_equivariance", "geometry", "matkernels", "pow_equivariance", 1e-10, 200, _per_dim)
def _p_pow_equiv(rng, cell, trials):
    n = cell["dim"]
    for i in range(trials):
        P = synth.random_spd(rng, n, 1.5)
        Q = synth.random_orthogonal(rng, n)
        t = _POWS[i % len(_POWS)]
        v = max(
            _rel(mk.spd_fun(P, ("pow", 1.0)), P),
            _rel(mk.mpow(Q @ P @ Q.T, t), Q @ mk.mpow(P, t) @ Q.T),
        )
        yield v, {"P": P, "Q": Q, "theta": t}


_VJP_FUNS = ("exp", "log", ("pow", 0.5), ("pow", -0.5), ("pow", 1.5), ("pow", -1.5))


def _fd_grad(S, f, G, h=1e-5):
    """Central-difference gradient of ``tr(G^T f(S))`` over symmetric directions."""
    n = len(S)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            d = (np.sum(G * mk.spd_fun(S + h * E, f)) - np.sum(G * mk.spd_fun(S - h * E, f))) / (2 * h)
            if i == j:
                out[i, i] = d
            else:
                out[i, j] = out[j, i] = d / 2.0
    return out


@register("vjp_finite_difference", "geometry", "matkernels", "vjp_finite_difference", 1e-5, 100, _per_dim)
def _p_vjp(rng, cell, trials):
    n = cell["dim"]
    for i in range(trials):
        f = _VJP_FUNS[i % len(_VJP_FUNS)]
        S = synth.random_spd(rng, n, 1.0)
        G = synth.random_sym(rng, n)
        yield _rel(mk.spd_fun_vjp(S, f, G), _fd_grad(S, f, G)), {"S": S, "G": G, "f": str(f)}


@register("cholesky_reconstruction", "geometry", "matkernels", "cholesky_reconstruction", 1e-9, 200, _per_dim)
def _p_chol(rng, cell, trials):
    n = cell["dim"]
    for _ in range(trials):
        P = synth.random_spd_cond(rng, n, 1e4)
        L = mk.cholesky(P)
        det = np.linalg.det(P)
        v = max(
            _rel(L @ L.T, P),
            abs(np.prod(np.diag(L)) ** 2 - det) / det,
            float(np.any(np.diag(L) <= 0) or np.any(np.triu(L, 1) != 0)),
        )
        yield v, {"P": P}


# ---------------------------------------------------------------------------
# SPD geometry


@register("spd_group_axioms", "geometry", "spd_geometry", "group_axioms", 1e-8, 200, _families("AIM", "LEM", "LCM"))
def _p_axioms(rng, cell, trials):
    n = cell["dim"]
    E = np.eye(n)
    for m in _metric_grid(cell["family"], n):
        for _ in range(trials):
            P, Q, R = (synth.random_spd(rng, n) for _ in range(3))
            c = lambda a, b: spd.group_compose(m, a, b)  # noqa: E731
            inv = spd.group_inverse(m, P)
            v = max(
                _rel(c(c(P, Q), R), c(P, c(Q, R))),
                _rel(c(E, P), P),
                _rel(c(P, E), P),
                _rel(c(inv, P), E),
                _rel(c(P, inv), E),
            )
            yield v, {"metric": _mdesc(m), "P": P, "Q": Q, "R": R}


@register("spd_left_invariance", "geometry", "spd_geometry", "left_invariance", 1e-8, 200, _families("AIM", "LEM", "LCM"))
def _p_left_inv(rng, cell, trials):
    n = cell["dim"]
    for m in _metric_grid(cell["family"], n):
        for _ in range(trials):
            P1, P2, Q = (synth.random_spd(rng, n) for _ in range(3))
            d = spd.geodesic_distance(m, P1, P2)
            dq = spd.geodesic_distance(m, spd.group_compose(m, Q, P1), spd.group_compose(m, Q, P2))
            yield abs(dq - d) / max(1.0, d), {"metric": _mdesc(m), "P1": P1, "P2": P2, "Q": Q}


@register("spd_bi_invariance", "geometry", "spd_geometry", "bi_invariance", 1e-8, 200, _families("LEM", "LCM"))
def _p_bi_inv(rng, cell, trials):
    n = cell["dim"]
    for m in _metric_grid(cell["family"], n):
        for _ in range(trials):
            P1, P2, Q = (synth.random_spd(rng, n) for _ in range(3))
            d = spd.geodesic_distance(m, P1, P2)
            dq = spd.geodesic_distance(m, spd.group_compose(m, P1, Q), spd.group_compose(m, P2, Q))
            yield abs(dq - d) / max(1.0, d), {"metric": _mdesc(m), "P1": P1, "P2": P2, "Q": Q}


@register("lem_deformation_distance", "geometry", "spd_geometry", "deformation", 1e-9, 100, _per_dim)
def _p_lem_deform(rng, cell, trials):
    n = cell["dim"]
    for t in THETAS:
        for a, b in _ab_grid("LEM", n):
            m, m1 = SpdMetric("LEM", n, t, a, b), SpdMetric("LEM", n, 1.0, a, b)
            for _ in range(trials):
                P, Q = synth.random_spd(rng, n), synth.random_spd(rng, n)
                d1 = spd.geodesic_distance(m1, P, Q)
                v = abs(spd.geodesic_distance(m, P, Q) - d1) / max(1.0, d1)
                yield v, {"metric": _mdesc(m), "P": P, "Q": Q}


def glem_inner(P, V, W):
    """``1/2 <A, B> - 1/4 <D(A), D(B)>`` with ``A, B`` the log-differentials."""
    A = mk.spd_fun_diff(P, "log", V)
    B = mk.spd_fun_diff(P, "log", W)
    return 0.5 * np.sum(A * B) - 0.25 * np.sum(np.diag(A) * np.diag(B))


@register("lcm_small_theta_limit", "geometry", "spd_geometry", "deformation", 1e-3, 100, _per_dim)
def _p_lcm_limit(rng, cell, trials):
    n = cell["dim"]
    m = SpdMetric("LCM", n, 1e-4)
    for _ in range(trials):
        P = synth.random_spd(rng, n)
        V, W = synth.random_sym(rng, n), synth.random_sym(rng, n)
        g = spd.metric_inner_at(m, P, spd.from_ambient(m, P, V), spd.from_ambient(m, P, W))
        ref = glem_inner(P, V, W)
        norm = np.sqrt(glem_inner(P, V, V) * glem_inner(P, W, W))
        yield abs(g - ref) / norm, {"P": P, "V": V, "W": W}


@register("spd_frechet_first_order", "geometry", "spd_geometry", "frechet_first_order", 1e-8, 10, _families("AIM", "LEM", "LCM"))
def _p_fm_first_order(rng, cell, trials):
    n = cell["dim"]
    for m in _metric_grid(cell["family"], n):
        for _ in range(trials):
            pts = np.array([synth.random_spd(rng, n) for _ in range(8)])
            w = rng.dirichlet(np.ones(8))
            M = spd.frechet_mean(m, pts, w)
            T = sum(wi * spd.log_at(m, M, p) for wi, p in zip(w, pts))
            yield np.linalg.norm(T), {"metric": _mdesc(m), "points": pts, "weights": w}


@register("spd_mean_homogeneity", "geometry", "spd_geometry", "mean_homogeneity", 1e-7, 10, _families("AIM", "LEM", "LCM"))
def _p_homog(rng, cell, trials):
    n = cell["dim"]
    for m in _metric_grid(cell["family"], n):
        for _ in range(trials):
            pts = np.array([synth.random_spd(rng, n) for _ in range(8)])
            B = synth.random_spd(rng, n)
            lhs = spd.frechet_mean(m, spd.group_compose(m, B, pts))
            rhs = spd.group_compose(m, B, spd.frechet_mean(m, pts))
            yield _rel(lhs, rhs), {"metric": _mdesc(m), "points": pts, "B": B}


@register("spd_dispersion_scaling", "geometry", "spd_geometry", "dispersion_scaling", 1e-8, 10, _families("AIM", "LEM", "LCM"))
def _p_disp(rng, cell, trials):
    n = cell["dim"]
    E = np.eye(n)
    for m in _metric_grid(cell["family"], n):
        g = SpdGroup(m)
        for i in range(trials):
            s = SCALES[i % len(SCALES)]
            pts = np.array([synth.random_spd(rng, n) for _ in range(8)])
            w = rng.dirichlet(np.ones(8))
            lhs = spd.frechet_variance(m, g.scale_dispersion(pts, s), E, w)
            rhs = s**2 * spd.frechet_variance(m, pts, E, w)
            yield abs(lhs - rhs) / rhs, {"metric": _mdesc(m), "points": pts, "weights": w, "s": s}


@register("lcm_pullback_distance", "geometry", "spd_geometry", "pullback_distance", 1e-10, 100, _per_dim)
def _p_lcm_pullback(rng, cell, trials):
    n = cell["dim"]
    for t in THETAS:
        m = SpdMetric("LCM", n, t)
        for _ in range(trials):
            P, Q = synth.random_spd(rng, n), synth.random_spd(rng, n)
            ref = np.linalg.norm(mk.clog(mk.mpow(P, t)) - mk.clog(mk.mpow(Q, t))) / abs(t)
            yield abs(spd.geodesic_distance(m, P, Q) - ref) / max(1.0, ref), {"theta": t, "P": P, "Q": Q}


def geodesic_length(m, P, Q, segments=100):
    """Length of the geodesic from P to Q by midpoint finite differences."""
    V = spd.log_at(m, P, Q)
    ts = np.linspace(0.0, 1.0, segments + 1)
    pts = [spd.exp_at(m, P, t * V) for t in ts]
    total = 0.0
    for k in range(segments):
        mid = spd.exp_at(m, P, 0.5 * (ts[k] + ts[k + 1]) * V)
        D = pts[k + 1] - pts[k]
        if m.family == "LCM":
            X = spd.from_ambient(m, mid, D)
            total += np.sqrt(spd.metric_inner_at(m, mid, X, X))
        else:
            total += np.sqrt(spd.metric_inner_at(m, mid, D, D))
    return total


@register("lcm_geodesic_length", "geometry", "spd_geometry", "pullback_distance", 1e-3, 10, _fixed({"dim": 2}))
def _p_lcm_length(rng, cell, trials):
    n = cell["dim"]
    for t in (0.5, 1.0, 1.5):
        m = SpdMetric("LCM", n, t)
        for _ in range(trials):
            P, Q = synth.random_spd(rng, n), synth.random_spd(rng, n)
            d = spd.geodesic_distance(m, P, Q)
            yield abs(geodesic_length(m, P, Q) - d) / d, {"theta": t, "P": P, "Q": Q}


# ---------------------------------------------------------------------------
# rotations

_NEAR_PI = 0.95 * np.pi


def _rot_dims(dims):
    return [{"dim": d} for d in dims if d >= 2]


@register("so_exp_log_pair", "rotation", "so_geometry", "exp_log_pair", 1e-9, 200, _rot_dims)
def _p_so_pair(rng, cell, trials):
    n = cell["dim"]
    for _ in range(trials):
        R = synth.random_rotation(rng, n, np.pi, 3.0)
        V = synth.cap_angle(synth.random_skew(rng, n, 2.0), _NEAR_PI)
        S = rot.so_exp(R, V)
        v = max(
            np.linalg.norm(rot.so_log(R, S) - V) / max(1.0, np.linalg.norm(V)),
            np.linalg.norm(rot.so_exp(R, rot.so_log(R, S)) - S),
        )
        yield v, {"R": R, "V": V}


@register("so_left_invariance", "rotation", "so_geometry", "left_invariance", 1e-9, 200, _rot_dims)
def _p_so_left(rng, cell, trials):
    n = cell["dim"]
    for _ in range(trials):
        Q = synth.random_rotation(rng, n, np.pi, 3.0)
        R = synth.random_rotation(rng, n, np.pi, 3.0)
        S = rot.so_exp(R, synth.cap_angle(synth.random_skew(rng, n, 2.0), 0.9 * np.pi))
        d = rot.so_distance(R, S)
        yield abs(rot.so_distance(Q @ R, Q @ S) - d), {"Q": Q, "R": R, "S": S}


@register("so3_closed_form_agreement", "rotation", "so_geometry", "closed_form_agreement", 1e-9, 500, _fixed({"dim": 3}))
def _p_so3_closed(rng, cell, trials):
    for i in range(trials):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        if i % 5 == 0:
            angle = 10 ** rng.uniform(-10, -4)
        else:
            angle = rng.uniform(0.0, np.pi - 1e-3)
        V = rot.hat(angle * axis)
        R = rot.so3_exp(V)
        v = max(
            np.linalg.norm(R - rot.skew_expm(V)),
            np.linalg.norm(rot.so3_log(R) - rot.rotation_logm(R)),
            np.linalg.norm(rot.so3_log(R) - V),
        )
        yield v, {"V": V}


@register("so_group_hooks", "rotation", "so_geometry", "group_hooks", 1e-9, 200, _rot_dims)
def _p_so_hooks(rng, cell, trials):
    g = RotationGroup(cell["dim"])
    E = g.identity
    for _ in range(trials):
        A, B, C = (synth.random_rotation(rng, g.n, np.pi, 3.0) for _ in range(3))
        v = max(
            np.linalg.norm(g.compose(g.compose(A, B), C) - g.compose(A, g.compose(B, C))),
            np.linalg.norm(g.compose(A, g.inverse(A)) - E),
            np.linalg.norm(g.compose(g.inverse(A), A) - E),
            np.linalg.norm(g.compose(E, A) - A),
            abs(np.linalg.det(g.compose(A, B)) - 1.0),
        )
        yield v, {"A": A, "B": B, "C": C}


@register("so_geodesic_arclength", "rotation", "so_geometry", "geodesic_arclength", 1e-9, 200, _rot_dims)
def _p_so_arclength(rng, cell, trials):
    n = cell["dim"]
    for _ in range(trials):
        R = synth.random_rotation(rng, n, np.pi, 3.0)
        S = rot.so_exp(R, synth.cap_angle(synth.random_skew(rng, n, 2.0), 0.9 * np.pi))
        t = rng.uniform()
        v = abs(rot.so_distance(R, rot.so_geodesic(R, S, t)) - t * rot.so_distance(R, S))
        yield v, {"R": R, "S": S, "t": t}


@register("so_retraction_order", "rotation", "so_geometry", "retraction_order", 0.0, 50, _rot_dims)
def _p_so_retract(rng, cell, trials):
    n = cell["dim"]
    for _ in range(trials):
        R = synth.random_rotation(rng, n, np.pi, 3.0)
        V = synth.random_skew(rng, n)
        V /= np.linalg.norm(V)
        errs = [np.linalg.norm(rot.so_retract(R, e * R @ V) - rot.so_exp(R, e * V)) for e in (1e-2, 1e-3)]
        ratio = errs[0] / errs[1]
        # SO(2) is abelian and the QR retraction is third-order there
        upper = max(0.0, ratio - 200.0) if n > 2 else 0.0
        yield max(0.0, 50.0 - ratio, upper), {"R": R, "V": V, "ratio": ratio}


@register("so_transport_isometry", "rotation", "so_geometry", "transport_isometry", 1e-10, 200, _rot_dims)
def _p_so_transport(rng, cell, trials):
    n = cell["dim"]
    for _ in range(trials):
        R, S = (synth.random_rotation(rng, n, np.pi, 3.0) for _ in range(2))
        V = synth.random_skew(rng, n)
        H = R @ V
        out = rot.so_transport(R, S, H)
        v = max(
            abs(np.sum(out * out) - np.sum(H * H)),
            np.linalg.norm(S.T @ out - R.T @ H),
            np.linalg.norm(rot.so_project(R, H) - V),
            np.linalg.norm(rot.so_project(R, R)),
        )
        yield v, {"R": R, "S": S, "V": V}


@register("so_frechet_first_order", "rotation", "so_geometry", "frechet_first_order", 1e-9, 50, _rot_dims)
def _p_so_fm(rng, cell, trials):
    g = RotationGroup(cell["dim"])
    for _ in range(trials):
        pts = _batch(g, rng, 8, 0.5)
        w = rng.dirichlet(np.ones(8))
        M = rot.so_frechet_mean(pts, w)
        T = sum(wi * rot.so_log(M, p) for wi, p in zip(w, pts))
        yield np.linalg.norm(T), {"points": pts, "weights": w}


# ---------------------------------------------------------------------------
# LieBN

_BACKENDS = ("spd-lem", "spd-lcm", "spd-aim", "euclidean", "so")


def _backend_cells(*names):
    def cells(dims):
        return [{"backend": b, "dim": d} for b in names for d in dims]

    return cells


def _mean_tol(backend):
    return 1e-6 if backend == "spd-aim" else 1e-7


@register("liebn_mean_control", "liebn", "liebn_core", "mean_control", 1e-7, 50, _backend_cells(*_BACKENDS))
def _p_mean_control(rng, cell, trials):
    tol_scale = 1e-7 / _mean_tol(cell["backend"])
    so = cell["backend"] == "so"
    for i in range(trials):
        g = _backend_for_trial(cell["backend"], cell["dim"], i)
        s = 0.5 if so else SCALES[i % len(SCALES)]
        X = _batch(g, rng)
        B = synth.random_center(g, rng, 0.5)
        out = bn.LieBatchNorm(g, B, s, EPS)(X)
        # normalized so that the AIM tolerance maps onto the common one
        yield g.distance(g.frechet_mean(out), B) * tol_scale, {"backend": g.describe(), "batch": X, "B": B, "s": s}


@register("liebn_variance_control", "liebn", "liebn_core", "variance_control", 1e-7, 50, _backend_cells(*_BACKENDS))
def _p_var_control(rng, cell, trials):
    scales = SO_SCALES if cell["backend"] == "so" else SCALES
    for i in range(trials):
        g = _backend_for_trial(cell["backend"], cell["dim"], i)
        s = scales[i % len(scales)]
        X = _batch(g, rng)
        st = bn.batch_statistics(g, X)
        pre = bn.normalize_batch(g, X, st.mean, st.variance, g.identity, s, EPS)
        target = s**2 * st.variance / (st.variance + EPS)
        yield abs(g.frechet_variance(pre, g.identity) - target) / target, {"backend": g.describe(), "batch": X, "s": s}


def textbook_bn(X, state, scale, bias, eps, momentum, training):
    """Per-feature batch normalization written out directly."""
    if training:
        mu = X.mean(axis=0)
        var = ((X - mu) ** 2).mean(axis=0)
        state["mean"] = (1 - momentum) * state["mean"] + momentum * mu
        state["var"] = (1 - momentum) * state["var"] + momentum * var
    else:
        mu, var = state["mean"], state["var"]
    return scale * (X - mu) / np.sqrt(var + eps) + bias


@register("euclidean_reduction", "liebn", "liebn_core", "euclidean_reduction", 1e-12, 4, _per_dim)
def _p_euclid(rng, cell, trials):
    d = cell["dim"]
    for _ in range(trials):
        scale = rng.uniform(0.5, 2.0, d) * rng.choice([-1.0, 1.0], d)
        bias = rng.standard_normal(d)
        mom = rng.uniform(0.05, 0.5)
        layers = [
            bn.LieBatchNorm(EuclideanGroup((1,)), bias[j : j + 1], scale[j], EPS, mom) for j in range(d)
        ]
        state = {"mean": np.zeros(d), "var": np.ones(d)}
        worst = 0.0
        for step in range(100):
            training = step % 10 != 9
            X = rng.standard_normal((16, d)) * rng.uniform(0.5, 3.0) + rng.standard_normal(d)
            ref = textbook_bn(X, state, scale, bias, EPS, mom, training)
            out = np.empty_like(X)
            for j, layer in enumerate(layers):
                layer.train(training)
                out[:, j] = layer(X[:, j : j + 1])[:, 0]
            rm = np.array([layer.running_mean[0] for layer in layers])
            rv = np.array([layer.running_var for layer in layers])
            worst = max(worst, np.max(np.abs(out - ref)), np.max(np.abs(rm - state["mean"])),
                        np.max(np.abs(rv - state["var"])))
        yield worst, {"scale": scale, "bias": bias, "momentum": mom}


@register("liebn_pullback_equivalence", "liebn", "liebn_core", "pullback_equivalence", 1e-9, 50, _families("LEM", "LCM", "AIM"))
def _p_pullback(rng, cell, trials):
    n, fam = cell["dim"], cell["family"]
    grid = _metric_grid(fam, n, (0.5, 1.0, 1.5))
    tol_scale = 1e-9 / (1e-7 if fam == "AIM" else 1e-9)
    for i in range(trials):
        m = grid[i % len(grid)]
        g = SpdGroup(m)
        B = synth.random_center(g, rng, 0.5)
        s = SCALES[i % len(SCALES)]
        direct = bn.LieBatchNorm(g, B, s, EPS, 0.3)
        via = bn.LieBatchNorm(g, B, s, EPS, 0.3)
        worst = 0.0
        for step in range(3):
            X = _batch(g, rng, 8)
            if step == 2:
                direct.eval()
                via.eval()
            a = direct(X)
            b = bn.pullback_forward(via, X)
            worst = max(worst, np.max(np.abs(a - b)), np.max(np.abs(direct.running_mean - via.running_mean)),
                        abs(direct.running_var - via.running_var))
        yield worst * tol_scale, {"metric": _mdesc(m), "B": B, "s": s}


def _state(layer):
    return (np.array(layer.running_mean, copy=True), layer.running_var)


@register("liebn_eval_purity", "liebn", "liebn_core", "eval_purity", 0.0, 10, _backend_cells(*_BACKENDS))
def _p_eval_purity(rng, cell, trials):
    for i in range(trials):
        g = _backend_for_trial(cell["backend"], cell["dim"], i)
        layer = bn.LieBatchNorm(g, synth.random_center(g, rng, 0.3), 0.5, EPS, 0.2)
        for _ in range(2):
            layer(_batch(g, rng))
        layer.eval()
        X = _batch(g, rng)
        m0, v0 = _state(layer)
        a, b = layer(X), layer(X)
        m1, v1 = _state(layer)
        viol = float(np.any(a != b)) + float(np.any(m0 != m1)) + float(v0 != v1)
        yield viol, {"backend": g.describe(), "batch": X}


@register("aim_scaling_power", "liebn", "liebn_core", "aim_scaling_power", 1e-12, 50, _per_dim)
def _p_aim_power(rng, cell, trials):
    g = SpdGroup(SpdMetric("AIM", cell["dim"]))
    for i in range(trials):
        X = _batch(g, rng, 8)
        s = SCALES[i % len(SCALES)]
        st = bn.batch_statistics(g, X)
        centered = g.compose(g.inverse(st.mean), X)
        c = s / np.sqrt(st.variance + EPS)
        step = g.scale_dispersion(centered, c)
        ref = mk.spd_fun(centered, "pow", c)
        yield max(_rel(a, b) for a, b in zip(step, ref)), {"batch": X, "s": s}


@register("gamma_train_boundaries", "liebn", "liebn_core", "gamma_train_boundaries", 0.0, 1, _fixed({}))
def _p_gamma(rng, cell, trials):
    # interior value: exact up to the rounding of sqrt
    mid = abs(bn.gamma_train(3, 2, 0.5) - (1.0 - np.sqrt(0.5) + 0.5))
    worst = 0.0 if mid <= 2e-16 else mid
    for K in range(2, 12):
        for d in range(1, 9):
            rho = 1.0 / d
            seq = [bn.gamma_train(K, k, rho) for k in range(1, K + 4)]
            v = max(
                abs(seq[0] - 1.0),
                max(abs(x - rho) for x in seq[K - 1 :]),
                max(max(0.0, b - a) for a, b in zip(seq, seq[1:])),
            )
            worst = max(worst, v)
    yield worst, {}


@register("mliebn_equivalence", "liebn", "liebn_core", "mliebn_equivalence", 0.0, 5, _backend_cells("euclidean", "spd-lem", "spd-aim", "so"))
def _p_mliebn(rng, cell, trials):
    for i in range(trials):
        g = _backend_for_trial(cell["backend"], cell["dim"], i)
        gamma = (0.1, 0.5, 1.0)[i % 3]
        B = synth.random_center(g, rng, 0.3)
        plain = bn.LieBatchNorm(g, B, 0.5, EPS, gamma)
        mom = bn.MomentumLieBatchNorm(g, B, 0.5, EPS, gamma, K=4, domains_per_batch=2, train_momentum=gamma)
        worst = 0.0
        for _ in range(5):
            X = _batch(g, rng)
            a, b = plain(X), mom(X)
            diffs = [
                plain.running_mean - mom.running_mean,
                plain.running_mean - mom.train_running_mean,
                [plain.running_var - mom.running_var, mom.running_var - mom.train_running_var],
            ]
            if gamma == 1.0:
                diffs.append(a - b)
            worst = max(worst, max(np.max(np.abs(d)) for d in diffs))
        plain.eval()
        mom.eval()
        X = _batch(g, rng)
        worst = max(worst, np.max(np.abs(plain(X) - mom(X))))
        yield worst, {"backend": g.describe(), "gamma": gamma}


@register("dsm_partition", "liebn", "liebn_core", "dsm_partition", 1e-12, 10, _backend_cells("euclidean", "spd-lem", "spd-lcm", "so"))
def _p_dsm(rng, cell, trials):
    for i in range(trials):
        g = _backend_for_trial(cell["backend"], cell["dim"], i)
        domains = ("a", "b", "c")
        kw = dict(scale=0.7, eps=EPS, momentum=0.2, K=3, domains_per_batch=2)
        bank = bn.DomainSpecificLieBatchNorm(g, domains, **kw)
        solo = {d: bn.MomentumLieBatchNorm(g, None, **kw) for d in domains}
        worst = 0.0
        for step in range(4):
            # domain "c" is left out of the first step to exercise the empty case
            pool = domains if step else domains[:2]
            ids = np.array([pool[k % len(pool)] for k in range(12)])
            rng.shuffle(ids)
            X = _batch(g, rng, 12)
            out = bank(X, ids)
            for d in pool:
                idx = ids == d
                worst = max(worst, np.max(np.abs(out[idx] - solo[d](X[idx]))))
            for d in domains:
                worst = max(worst, np.max(np.abs(bank.layers[d].running_mean - solo[d].running_mean)),
                            abs(bank.layers[d].k - solo[d].k))
        yield worst, {"backend": g.describe()}


# ---------------------------------------------------------------------------
# Gaussian


def _gauss_cells(dims):
    out = []
    for fam, theta in (("spd-lem", 1.0), ("spd-lcm", 1.0), ("spd-lcm", 0.5)):
        for d in dims:
            out.append({"backend": fam, "theta": theta, "dim": d})
    return out


def _gauss_params(cell, rng, centered=False, sigma=0.5):
    g = _backend(cell["backend"], cell["dim"], cell.get("theta", 1.0))
    M = g.identity if centered else synth.random_center(g, rng, 0.5)
    return gs.GaussianParams(g, M, sigma)


def _seed(rng):
    return int(rng.integers(2**31))


N_GAUSS = 20000


@register("gaussian_mean_and_variance", "gaussian", "manifold_gaussian", "mean_and_variance", 1.0, 1, _gauss_cells, strict=True)
def _p_g_mean(rng, cell, trials):
    for _ in range(trials):
        p = _gauss_params(cell, rng)
        seed = _seed(rng)
        c = gs.check_mean(p, N_GAUSS, seed).checks
        yield max(c["mean_shift"] / (3 * c["standard_error"]), abs(c["variance_ratio"] - 1) / 0.05), {
            "seed": seed, "M": p.mean, "checks": c}


@register("gaussian_homogeneity", "gaussian", "manifold_gaussian", "homogeneity", 1.0, 1, _gauss_cells, strict=True)
def _p_g_homog(rng, cell, trials):
    for _ in range(trials):
        p = _gauss_params(cell, rng)
        B = synth.random_center(p.group, rng, 0.7)
        seed = _seed(rng)
        c = gs.verify_homogeneity(p, B, N_GAUSS, seed).checks
        yield max(c["mean_shift"] / (3 * c["standard_error"]), abs(c["variance_ratio"] - 1) / 0.05), {
            "seed": seed, "M": p.mean, "B": B, "checks": c}


@register("gaussian_scaling_law", "gaussian", "manifold_gaussian", "scaling_law", 1.0, 3, _gauss_cells, strict=True)
def _p_g_scaling(rng, cell, trials):
    p = _gauss_params(cell, rng, centered=True)
    for s in (0.5, 2.0, -1.0)[:trials]:
        seed = _seed(rng)
        c = gs.verify_scaling_law(p, s, N_GAUSS, seed).checks
        v = max(abs(c["variance_ratio_over_s2"] - 1) / 0.05, c["ks_threshold"] / max(c["ks_min_pvalue"], 1e-300))
        yield v, {"seed": seed, "s": s, "checks": c}


@register("gaussian_mle_probe", "gaussian", "manifold_gaussian", "mle_probe", 0.0, 3, _gauss_cells, strict=True)
def _p_g_mle(rng, cell, trials):
    for _ in range(trials):
        p = _gauss_params(cell, rng)
        seed = _seed(rng)
        yield -gs.mle_probe(p, 2000, seed), {"seed": seed, "M": p.mean}


@register("gaussian_seed_determinism", "gaussian", "manifold_gaussian", "seed_determinism", 0.0, 3, _gauss_cells)
def _p_g_seed(rng, cell, trials):
    for _ in range(trials):
        p = _gauss_params(cell, rng)
        seed = _seed(rng)
        a, b = gs.sample(p, 100, seed), gs.sample(p, 100, seed)
        c = gs.sample(p, 100, seed + 1)
        yield float(np.any(a != b)) + float(np.array_equal(a, c)), {"seed": seed}


@register("gaussian_density_consistency", "gaussian", "manifold_gaussian", "density_consistency", 0.05, 1,
          _fixed({"backend": "spd-lem", "dim": 2}), strict=True)
def _p_g_density(rng, cell, trials):
    for _ in range(trials):
        p = _gauss_params(cell, rng, sigma=1.0)
        seed = _seed(rng)
        yield 1.0 - gs.density_shell_correlation(p, 50000, seed), {"seed": seed}


@register("gaussian_concentration", "gaussian", "manifold_gaussian", "concentration", 1e-6, 3, _gauss_cells)
def _p_g_conc(rng, cell, trials):
    for _ in range(trials):
        p = _gauss_params(cell, rng, sigma=1e-8)
        seed = _seed(rng)
        yield gs.concentration(p, 100, seed), {"seed": seed, "M": p.mean}


# ---------------------------------------------------------------------------
# runner


def check_coverage(registry=None):
    """Raise ``AssertionError`` if some listed invariant has no property."""
    covered = {(p.module, p.invariant) for p in registry or REGISTRY}
    missing = [(mod, inv) for mod, invs in INVARIANTS.items() for inv in invs if (mod, inv) not in covered]
    assert not missing, f"invariants without a registered property: {missing}"


check_coverage()


def to_jsonable(x):
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _cell_rng(seed, name, cell):
    key = zlib.crc32(f"{name}|{json.dumps(cell, sort_keys=True)}".encode())
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), key])))


def run_cell(prop, cell, seed, tol=None):
    """Run one property on one cell and return its report record."""
    tol = prop.tol if tol is None else float(tol)
    rng = _cell_rng(seed, prop.name, cell)
    start = time.perf_counter()
    worst, count, failing = None, 0, None
    try:
        for v, inputs in prop.fn(rng, cell, prop.trials):
            v = float(v)
            bad = not np.isfinite(v) or (v >= tol if prop.strict else v > tol)
            worst = v if worst is None or not np.isfinite(v) else max(worst, v)
            if bad and failing is None:
                failing = {"trial": count, "violation": v, "inputs": inputs}
            count += 1
    except (LieBNError, np.linalg.LinAlgError) as exc:
        worst = float("inf")
        failing = {"trial": count, "error": type(exc).__name__, "message": str(exc)}
    return to_jsonable({
        "suite": prop.suite,
        "module": prop.module,
        "property": prop.name,
        "invariant": prop.invariant,
        "cell": cell,
        "trials": count,
        "tolerance": tol,
        "max_violation": worst,
        "passed": failing is None,
        "failing": failing,
        "wall_clock_s": time.perf_counter() - start,
    })


def select(suite):
    if suite == "all":
        return list(REGISTRY)
    if suite not in SUITES:
        raise InvalidInput(f"unknown suite {suite!r}; expected one of {SUITES + ('all',)}")
    return [p for p in REGISTRY if p.suite == suite]


def run_suite(suite="all", dims=(2, 3), seed=0, tolerances=None, threads=1, properties=None):
    """Run a suite and return the report document.

    Parameters
    ----------
    suite : {'geometry', 'rotation', 'liebn', 'gaussian', 'all'}
    dims : sequence of int
        Matrix sizes for dimension-dependent properties (each >= 2).
    seed : int
    tolerances : dict, optional
        Per-property tolerance overrides, keyed by property name.
    threads : int
        Number of cells evaluated concurrently.
    properties : sequence of str, optional
        Restrict the run to these property names.
    """
    dims = [int(d) for d in dims]
    if not dims or min(dims) < 2:
        raise InvalidInput("dims must be a non-empty list of integers >= 2")
    tolerances = dict(tolerances or {})
    props = select(suite)
    if properties:
        unknown = set(properties) - {p.name for p in REGISTRY}
        if unknown:
            raise InvalidInput(f"unknown properties {sorted(unknown)}")
        props = [p for p in props if p.name in set(properties)]
    unknown = set(tolerances) - {p.name for p in REGISTRY}
    if unknown:
        raise InvalidInput(f"tolerance overrides for unknown properties {sorted(unknown)}")
    jobs = [(p, c) for p in props for c in p.cells(dims)]
    start = time.perf_counter()
    run = lambda job: run_cell(job[0], job[1], seed, tolerances.get(job[0].name))  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(run, jobs))
    else:
        records = [run(j) for j in jobs]
    failed = [r for r in records if not r["passed"]]
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "config": {"suite": suite, "dims": dims, "seed": int(seed), "tolerances": tolerances},
        "records": records,
        "summary": {
            "properties": len({r["property"] for r in records}),
            "cells": len(records),
            "failed": len(failed),
            "passed": not failed,
            "failing_properties": sorted({r["property"] for r in failed}),
        },
        "wall_clock_s": time.perf_counter() - start,
    }
