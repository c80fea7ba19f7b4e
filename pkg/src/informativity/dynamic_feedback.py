"""Dynamic measurement feedback from input/state/output or input/output data.

The compensator is observer based::

    w(t+1) = K w(t) + L y(t),    u(t) = M w(t)

With input/state/output data, the plant matrices are identified on the
column space of the data (after dropping linearly dependent input channels),
and ``M``, ``L`` are identity-weight LQ gains of the identified pair and its
dual. With input/output data only, a state sequence is first reconstructed
as the intersection of past and future Hankel row spaces; it equals the true
state up to an unknown similarity, which does not affect closed-loop spectra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import BlockMatrices, hankel
from .errors import (
    DepthInvalid,
    DimensionMismatch,
    NotInformative,
    NumericalError,
    RankConditionFailed,
)
from .jsonutil import to_jsonable
from .numerics import (
    SpectrumReport,
    as_matrix,
    dare_solve,
    is_detectable,
    is_stabilizable,
    is_stable,
    rank_tol,
    rowspace_intersection,
    spectrum,
)


@dataclass
class Compensator:
    K: np.ndarray
    L: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        self.K = as_matrix(self.K, "K")
        w = self.K.shape[0]
        self.L = np.asarray(self.L, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        if self.L.ndim < 2:
            self.L = self.L.reshape(w, -1)
        if self.M.ndim < 2:
            self.M = self.M.reshape(-1, w)
        if self.L.shape[0] != w or self.M.shape[1] != w:
            raise DimensionMismatch(f"L {self.L.shape} and M {self.M.shape} do not match K {self.K.shape}")
        if self.K.shape != (w, w):
            raise DimensionMismatch(f"K must be square, got {self.K.shape}")

    def closed_loop(self, A, B, C, D=None):
        """State matrix of the plant in feedback with the compensator."""
        A = as_matrix(A, "A")
        n = A.shape[0]
        B = np.asarray(B, dtype=float).reshape(n, -1)
        C = np.asarray(C, dtype=float).reshape(-1, n)
        D = np.zeros((C.shape[0], B.shape[1])) if D is None else np.asarray(D, dtype=float).reshape(C.shape[0], -1)
        return np.block([[A, B @ self.M], [self.L @ C, self.K + self.L @ D @ self.M]])

    def to_json(self):
        return {"K": self.K.tolist(), "L": self.L.tolist(), "M": self.M.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj["K"], dtype=float), np.asarray(obj["L"], dtype=float),
                   np.asarray(obj["M"], dtype=float))


@dataclass
class StateReconstruction:
    X_bar: np.ndarray
    U_bar: np.ndarray
    Y_bar: np.ndarray
    hankel_rank: int
    intersection_dim: int
    transform: np.ndarray | None = None

    def states(self):
        """Reconstructed states in the coordinates used for synthesis."""
        return self.X_bar if self.transform is None else self.transform @ self.X_bar

    def block_matrices(self) -> BlockMatrices:
        X = self.states()
        return BlockMatrices(self.U_bar, X[:, :-1], X[:, 1:], self.Y_bar)

    def balanced(self) -> "StateReconstruction":
        """Copy in coordinates where the identified plant is balanced.

        The orthonormal basis of the row-space intersection can leave a mode
        almost unreachable through the identified input map and almost
        unobservable through the output map at the same time, which ruins the
        conditioning of the Riccati equations. The square-root balancing
        transform of the finite-horizon reachability and observability
        matrices removes that without changing any closed-loop spectrum. The
        copy is returned unchanged when the identified plant is not minimal.
        """
        bm = BlockMatrices(self.U_bar, self.X_bar[:, :-1], self.X_bar[:, 1:], self.Y_bar)
        n = bm.n
        V = np.linalg.pinv(bm.stacked)
        A, B = bm.X_plus @ V[:, :n], bm.X_plus @ V[:, n:]
        C = bm.Y_minus @ V[:, :n]
        Rc = [B]
        Ob = [C]
        for _ in range(n - 1):
            Rc.append(A @ Rc[-1])
            Ob.append(Ob[-1] @ A)
        Rc, Ob = np.hstack(Rc), np.vstack(Ob)
        U, sv, Wt = np.linalg.svd(Ob @ Rc)
        T = None
        if sv.size >= n and sv[n - 1] > 1e-12 * sv[0]:
            root = 1.0 / np.sqrt(sv[:n])
            T = root[:, None] * (U[:, :n].T @ Ob)
        return StateReconstruction(self.X_bar, self.U_bar, self.Y_bar, self.hankel_rank,
                                   self.intersection_dim, T)

    def to_json(self):
        return to_jsonable({"X_bar": self.X_bar, "transform": self.transform, "hankel_rank": self.hankel_rank,
                            "intersection_dim": self.intersection_dim})


@dataclass
class IsoCertificate:
    S: np.ndarray
    U_hat: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    identified: dict
    M_hat: np.ndarray
    compensator: Compensator
    closed_loop: np.ndarray
    closed_loop_spectrum: SpectrumReport
    reconstruction: StateReconstruction | None = None

    def to_json(self):
        out = {
            "S": self.S, "V1": self.V1, "V2": self.V2, "identified": self.identified,
            "K": self.compensator.K, "L": self.compensator.L, "M": self.compensator.M,
            "M_hat": self.M_hat, "closed_loop_spectrum": self.closed_loop_spectrum,
        }
        if self.reconstruction is not None:
            out["reconstruction"] = {"hankel_rank": self.reconstruction.hankel_rank,
                                     "intersection_dim": self.reconstruction.intersection_dim,
                                     "transform": self.reconstruction.transform}
        return to_jsonable(out)


def reduce_inputs(U_minus):
    """Factor ``U_- = S U_hat`` with ``U_hat`` made of independent rows of ``U_-``.

    Rows are taken greedily in order, so ``U_hat`` keeps the original input
    channels and the returned selection matrix ``E`` is a left inverse of ``S``.
    """
    U = as_matrix(U_minus, "U_minus")
    m = U.shape[0]
    chosen = []
    for i in range(m):
        if rank_tol(U[chosen + [i]]) > len(chosen):
            chosen.append(i)
    U_hat = U[chosen]
    if chosen:
        S = np.linalg.lstsq(U_hat.T, U.T, rcond=None)[0].T
        S[chosen] = np.eye(len(chosen))
    else:
        S = np.zeros((m, 0))
    E = np.zeros((len(chosen), m))
    E[np.arange(len(chosen)), chosen] = 1.0
    return S, U_hat, E


def _lq_gain(A, B):
    """Identity-weight LQ gain, or an empty gain when there are no inputs."""
    if B.shape[1] == 0:
        return np.zeros((0, A.shape[0]))
    return dare_solve(A, B, np.eye(A.shape[0]), np.eye(B.shape[1]))[1]


def synth_output_feedback(bm: BlockMatrices) -> IsoCertificate:
    """Stabilizing observer-based compensator from input/state/output data."""
    if bm.Y_minus is None:
        raise DimensionMismatch("output data Y_minus are required")
    n = bm.n
    S, U_hat, _ = reduce_inputs(bm.U_minus)
    k = U_hat.shape[0]
    stacked = np.vstack([bm.X_minus, U_hat])
    r = rank_tol(stacked)
    if r != n + k:
        raise NotInformative(f"[X_minus; U_hat] has rank {r} < {n + k}",
                             {"rank": r, "required_rank": n + k})
    V = np.linalg.pinv(stacked)
    V1, V2 = V[:, :n], V[:, n:]
    A, BS = bm.X_plus @ V1, bm.X_plus @ V2
    C, DS = bm.Y_minus @ V1, bm.Y_minus @ V2
    identified = {"A": A, "BS": BS, "C": C, "DS": DS}
    if not is_stabilizable(A, BS):
        raise NotInformative("identified pair (A, BS) is not stabilizable", {"identified": identified})
    if not is_detectable(C, A):
        raise NotInformative("identified pair (C, A) is not detectable", {"identified": identified})
    M_hat = _lq_gain(A, BS)
    L = -_lq_gain(A.T, C.T).T
    K = (bm.X_plus - L @ bm.Y_minus) @ (V1 + V2 @ M_hat)
    comp = Compensator(K, L, S @ M_hat)
    closed = Compensator(K, L, M_hat).closed_loop(A, BS, C, DS)
    eigs = spectrum(closed)
    if not is_stable(closed):
        raise NumericalError(f"closed-loop radius {eigs.spectral_radius:.6g} after synthesis")
    return IsoCertificate(S, U_hat, V1, V2, identified, M_hat, comp, closed, eigs)


def reconstruct_states(U_minus, Y_minus, n: int, k: int) -> StateReconstruction:
    """State sequence, up to similarity, from one input/output trajectory.

    ``U_minus`` is ``m x T`` and ``Y_minus`` is ``p x T``. The depth ``k``
    must satisfy ``n < k < T/2``. The returned ``X_bar`` has orthonormal rows
    and ``T - 2k + 1`` columns, standing for the states ``x(k), ..., x(T-k)``;
    ``U_bar`` and ``Y_bar`` are the matching samples ``k, ..., T-k-1``.
    """
    U = as_matrix(U_minus, "U_minus")
    Y = as_matrix(Y_minus, "Y_minus")
    T = U.shape[1]
    if Y.shape[1] != T:
        raise DimensionMismatch("U_minus and Y_minus have different lengths")
    if not n < k or not 2 * k < T:
        raise DepthInvalid(f"depth k = {k} must satisfy n < k < T/2 with n = {n}, T = {T}")
    m, p = U.shape[0], Y.shape[0]
    Hu = hankel(U.T, 2 * k)
    Hy = hankel(Y.T, 2 * k)
    required = 2 * k * m + n
    achieved = rank_tol(np.vstack([Hu, Hy]))
    if achieved != required:
        raise RankConditionFailed(
            f"rank of the input/output Hankel matrix is {achieved}, expected {required}",
            achieved, required)
    past = np.vstack([Hu[:k * m], Hy[:k * p]])
    future = np.vstack([Hu[k * m:], Hy[k * p:]])
    X_bar = rowspace_intersection(past, future)
    d = X_bar.shape[0]
    if d != n:
        raise RankConditionFailed(f"past/future intersection has dimension {d}, expected {n}", d, n)
    return StateReconstruction(X_bar, U[:, k:T - k], Y[:, k:T - k], achieved, d)


def synth_io_feedback(U_minus, Y_minus, n: int, k: int) -> IsoCertificate:
    """Compensator from input/output data of a minimal plant of order ``n``.

    Minimality of the plant is the caller's assertion; it cannot be checked
    from the data.
    """
    rec = reconstruct_states(U_minus, Y_minus, n, k).balanced()
    cert = synth_output_feedback(rec.block_matrices())
    cert.reconstruction = rec
    return cert
