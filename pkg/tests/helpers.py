"""Random systems and trajectories shared by the tests."""

import numpy as np

from informativity.data import BlockMatrices
from informativity.oracle import SystemModel, simulate


def random_system(rng, n, m, radius=None, p=0):
    A = rng.standard_normal((n, n))
    if radius is not None:
        A *= radius / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12)
    B = rng.standard_normal((n, m))
    if p:
        return SystemModel(A, B, rng.standard_normal((p, n)), np.zeros((p, m)))
    return SystemModel(A, B)


def controllable(A, B):
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.linalg.matrix_rank(np.hstack(blocks)) == n


def observable(C, A):
    return controllable(A.T, C.T)


def trajectory(sys, rng, T, x0=None):
    """Gaussian-input experiment from ``sys`` as block matrices (with outputs if ``sys`` has them)."""
    x0 = rng.standard_normal(sys.n) if x0 is None else x0
    e = simulate(sys, x0, rng.standard_normal((sys.m, T)))
    return BlockMatrices(e.u, e.x[:, :-1], e.x[:, 1:], e.y)
