import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))


def rand_spd(rng, n, cond=100.0):
    """Random SPD matrix with condition number exactly ``cond``."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(np.linspace(0.0, np.log(cond), n))
    rng.shuffle(w)
    w = w / np.sqrt(w.max() * w.min())
    return (Q * w) @ Q.T


def rand_sym(rng, n, scale=1.0):
    A = rng.standard_normal((n, n)) * scale
    return 0.5 * (A + A.T)


def rel_fro(A, B):
    return np.linalg.norm(A - B) / max(np.linalg.norm(B), 1e-300)
