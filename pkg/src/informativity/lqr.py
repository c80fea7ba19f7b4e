"""Infinite-horizon LQ regulation from input/state data.

The data are informative for LQ regulation when one gain is optimal for every
consistent system. The common Riccati solution is the maximizer of
``trace P`` over ``P >= 0`` with ``L(P) <= 0``, where::

    L(P) = X_-' P X_- - X_+' P X_+ - X_-' Q X_- - U_-' R U_-

and the optimal gain is ``U_- X^r`` for a right inverse ``X^r`` of ``X_-``
annihilated by ``L(P)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import AnalysisVerdict, informative_sysid
from .data import BlockMatrices
from .errors import DimensionMismatch, NotInformative, NumericalError, Unstable
from .jsonutil import to_jsonable
from .lmi import FEASIBLE, INFEASIBLE, OPTIMAL, LmiProblem, bmat, solve_feasibility, solve_trace_max
from .numerics import (
    as_matrix,
    hautus_observable,
    is_stabilizable,
    is_stable,
    lyapunov_solve,
    right_inverse_family,
    unit_circle_eigenvalues,
)

SYSID_BRANCH = "SysIdBranch"
PATHOLOGICAL_BRANCH = "PathologicalBranch"

RIGHT_INVERSE_TOL = 1e-7


@dataclass
class LqrWeights:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.Q = as_matrix(self.Q, "Q")
        self.R = as_matrix(self.R, "R")
        for name, M in (("Q", self.Q), ("R", self.R)):
            if M.shape[0] != M.shape[1]:
                raise DimensionMismatch(f"{name} must be square, got {M.shape}")
            if np.max(np.abs(M - M.T), initial=0.0) > 1e-12:
                raise ValueError(f"{name} is not symmetric")
        self.Q = 0.5 * (self.Q + self.Q.T)
        self.R = 0.5 * (self.R + self.R.T)
        if self.Q.size and np.linalg.eigvalsh(self.Q)[0] < -1e-10:
            raise ValueError("Q must be positive semidefinite")
        if self.R.size and np.linalg.eigvalsh(self.R)[0] <= 1e-10:
            raise ValueError("R must be positive definite")

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj["Q"], dtype=float), np.asarray(obj["R"], dtype=float))

    def to_json(self):
        return {"Q": self.Q.tolist(), "R": self.R.tolist()}

    def check(self, n, m):
        if self.Q.shape != (n, n) or self.R.shape != (m, m):
            raise DimensionMismatch(
                f"weights have shapes {self.Q.shape}, {self.R.shape}; expected {(n, n)}, {(m, m)}")


@dataclass
class LqrCertificate:
    K: np.ndarray
    P_plus: np.ndarray
    branch: str
    right_inverse: np.ndarray
    closed_loop: np.ndarray
    theta: np.ndarray | None = None
    sdp: dict | None = None

    def to_json(self):
        out = {"K": self.K, "P_plus": self.P_plus, "branch": self.branch,
               "right_inverse": self.right_inverse, "closed_loop": self.closed_loop}
        if self.theta is not None:
            out["theta"] = self.theta
        if self.sdp is not None:
            out["sdp"] = self.sdp
        return to_jsonable(out)


def lqr_solvable(A, B, w: LqrWeights) -> bool:
    """Stabilizable, and no unobservable mode of ``(Q, A)`` on the unit circle."""
    A = as_matrix(A, "A")
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    if not is_stabilizable(A, B):
        return False
    return all(hautus_observable(w.Q, A, lam) for lam in unit_circle_eigenvalues(A))


def lyapunov_operator(bm: BlockMatrices, w: LqrWeights, P):
    """``L(P)`` evaluated at a numeric ``P`` (or an affine expression)."""
    return (bm.X_minus.T @ P @ bm.X_minus - bm.X_plus.T @ P @ bm.X_plus
            - bm.X_minus.T @ w.Q @ bm.X_minus - bm.U_minus.T @ w.R @ bm.U_minus)


def pathological_lmi(bm: BlockMatrices, w: LqrWeights) -> LmiProblem:
    """``Theta`` with a stable, input-free closed loop annihilated by ``Q``."""
    prob = LmiProblem()
    Theta = prob.variable("Theta", (bm.T, bm.n))
    XmTh = bm.X_minus @ Theta
    XpTh = bm.X_plus @ Theta
    prob.symmetric_constraint(XmTh, name="X_minus Theta symmetric")
    prob.zero(bm.U_minus @ Theta, name="U_minus Theta = 0")
    prob.zero(w.Q @ XpTh, name="Q X_plus Theta = 0")
    prob.psd(bmat([[XmTh, XpTh], [XpTh.T, XmTh]]), strict=True, name="stability block")
    return prob


def informative_for_lqr(bm: BlockMatrices, w: LqrWeights) -> AnalysisVerdict:
    """Whether one gain is LQ-optimal for every system consistent with the data.

    The identification branch is tried first; the second branch covers data
    whose consistent systems all share a stable drift matrix killed by ``Q``.
    """
    w.check(bm.n, bm.m)
    sysid = informative_sysid(bm)
    if sysid.informative:
        A, B = sysid.certificate["A"], sysid.certificate["B"]
        solvable = lqr_solvable(A, B, w)
        cert = {"branch": SYSID_BRANCH if solvable else None, "sysid": True,
                "A": A, "B": B, "solvable": solvable}
        return AnalysisVerdict("Lqr", solvable, cert)
    scaled, d = bm.column_normalized()
    sol = solve_feasibility(pathological_lmi(scaled, w))
    cert = {"sysid": False, "lmi": sol.to_json()}
    if sol.status == FEASIBLE:
        cert.update(branch=PATHOLOGICAL_BRANCH, theta=d[:, None] * sol.values["Theta"])
        return AnalysisVerdict("Lqr", True, cert)
    if sol.status != INFEASIBLE:
        raise NumericalError(f"LMI solver failed: {sol.message}")
    cert["branch"] = None
    return AnalysisVerdict("Lqr", False, cert)


def _trace_max(bm, w, start_shift=None):
    prob = LmiProblem()
    P = prob.symmetric("P", bm.n)
    prob.psd(P, name="P >= 0")
    prob.nsd(lyapunov_operator(bm, w, P), name="L(P) <= 0")
    prob.maximize_trace(P)
    sol = solve_trace_max(prob, start_shift=start_shift)
    if sol.status != OPTIMAL:
        raise NumericalError(f"trace maximization failed: {sol.message}")
    return sol


def _annihilating_right_inverse(bm, Lp):
    """Least-squares solution of ``X_- X = I`` and ``L X = 0``, with its residual."""
    n = bm.n
    lhs = np.vstack([bm.X_minus, Lp])
    rhs = np.vstack([np.eye(n), np.zeros((bm.T, n))])
    X, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    scale = max(1.0, np.max(np.abs(lhs)))
    return X, float(np.max(np.abs(lhs @ X - rhs))) / scale


def _policy_refine(bm, w, P, sweeps=30):
    """Polish ``P`` by data-based policy iteration.

    Each sweep picks the right inverse minimizing ``trace X' (-L(P)) X`` and
    evaluates the resulting common closed loop with a Lyapunov equation.
    From a stabilizing start the iterates increase monotonically to the
    maximal solution; the step is quadratically convergent near it.
    """
    fam = right_inverse_family(bm.X_minus)
    for _ in range(sweeps):
        N = -lyapunov_operator(bm, w, P)
        if fam.G is None:
            X = fam.F
        else:
            G = fam.G
            H = np.linalg.lstsq(G.T @ N @ G, -G.T @ N @ fam.F, rcond=None)[0]
            X = fam.member(H)
        K = bm.U_minus @ X
        M = bm.X_plus @ X
        if not is_stable(M):
            return P
        P_next = lyapunov_solve(M, w.Q + K.T @ w.R @ K)
        done = np.max(np.abs(P_next - P)) <= 1e-14 * max(1.0, np.max(np.abs(P_next)))
        P = P_next
        if done:
            break
    return P


def gain_from_data(bm: BlockMatrices, w: LqrWeights, start_shift=None) -> LqrCertificate:
    """Optimal LQ gain and Riccati solution computed from the data.

    Raises NotInformative if no gain is optimal for all consistent systems,
    and NumericalError when the semidefinite program is solved too
    inaccurately to recover an exact right inverse.
    """
    verdict = informative_for_lqr(bm, w)
    if not verdict.informative:
        raise NotInformative("data are not informative for LQ regulation", verdict.to_json())
    branch = verdict.certificate["branch"]
    # column scaling leaves the feasible set in P unchanged; X below maps back by d
    scaled, d = bm.column_normalized()
    sol = _trace_max(scaled, w, start_shift)
    P = 0.5 * (sol.values["P"] + sol.values["P"].T)
    try:
        refined = _policy_refine(scaled, w, P)
    except Unstable:
        refined = P
    # keep the refinement only if it stays feasible and does not lose trace
    Lr = lyapunov_operator(scaled, w, refined)
    feas_tol = 1e-9 * max(1.0, np.max(np.abs(Lr)))
    if (np.linalg.eigvalsh(0.5 * (Lr + Lr.T))[-1] <= feas_tol
            and np.trace(refined) >= np.trace(P) - 1e-6 * max(1.0, abs(np.trace(P)))):
        P = refined
    Lp = lyapunov_operator(scaled, w, P)
    X, residual = _annihilating_right_inverse(scaled, Lp)
    if residual > RIGHT_INVERSE_TOL:
        raise NumericalError(f"no right inverse annihilated by L(P): residual {residual:.3g}")
    X = d[:, None] * X
    K = bm.U_minus @ X
    M = bm.X_plus @ X
    if not is_stable(M):
        raise NumericalError("recovered closed loop is not stable")
    sdp = {"objective": sol.objective, "duality_gap": sol.duality_gap,
           "kkt_residual": sol.kkt_residual, "right_inverse_residual": residual}
    theta = verdict.certificate.get("theta")
    return LqrCertificate(K, P, branch, X, M, theta, sdp)
