"""Static state feedback computed directly from input/state data.

Every gain has the form ``K = U_- X^r`` for a right inverse ``X^r`` of
``X_-``. For any system consistent with the data the closed loop then equals
``X_+ X^r``, so a single data matrix certifies the gain for all of them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import BlockMatrices
from .errors import (
    NotDeadbeatAssignable,
    NotInformative,
    NotStabilizable,
    NumericalError,
)
from .jsonutil import to_jsonable
from .lmi import FEASIBLE, INFEASIBLE, LmiProblem, bmat, solve_feasibility
from .numerics import (
    SpectrumReport,
    dare_solve,
    is_stable,
    place_spectrum,
    rank_tol,
    right_inverse_family,
    spectrum,
)

ALGEBRAIC = "AlgebraicRightInverse"
LMI = "Lmi"
DEADBEAT = "Deadbeat"

NILPOTENCY_TOL = 1e-8


@dataclass
class GainCertificate:
    K: np.ndarray
    route: str
    right_inverse: np.ndarray
    closed_loop: np.ndarray
    spectrum: SpectrumReport
    theta: np.ndarray | None = None

    def to_json(self):
        out = {
            "K": self.K,
            "route": self.route,
            "right_inverse": self.right_inverse,
            "closed_loop": self.closed_loop,
            "spectrum": self.spectrum,
        }
        if self.theta is not None:
            out["theta"] = self.theta
        return to_jsonable(out)


def _certificate(bm, right_inverse, route, theta=None, d=None):
    if d is not None:
        right_inverse = d[:, None] * right_inverse
    closed = bm.X_plus @ right_inverse
    return GainCertificate(bm.U_minus @ right_inverse, route, right_inverse, closed, spectrum(closed), theta)


def stabilizing_lmi(bm: BlockMatrices) -> LmiProblem:
    """Feasibility problem in ``Theta`` whose solutions give stabilizing gains."""
    prob = LmiProblem()
    Theta = prob.variable("Theta", (bm.T, bm.n))
    XmTh = bm.X_minus @ Theta
    XpTh = bm.X_plus @ Theta
    prob.symmetric_constraint(XmTh, name="X_minus Theta symmetric")
    prob.psd(bmat([[XmTh, XpTh], [XpTh.T, XmTh]]), strict=True, name="stability block")
    return prob


def stabilize_lmi(bm: BlockMatrices) -> GainCertificate:
    """Stabilizing gain ``K = U_- Theta (X_- Theta)^-1`` from a feasible ``Theta``.

    Raises NotInformative when the LMI is infeasible, with the solver's dual
    certificate attached.
    """
    scaled, d = bm.column_normalized()
    sol = solve_feasibility(stabilizing_lmi(scaled))
    if sol.status == INFEASIBLE:
        raise NotInformative("LMI infeasible", sol.to_json())
    if sol.status != FEASIBLE:
        raise NumericalError(f"LMI solver failed: {sol.message}")
    Theta = d[:, None] * sol.values["Theta"]
    right = Theta @ np.linalg.inv(bm.X_minus @ Theta)
    cert = _certificate(bm, right, LMI, Theta)
    if not is_stable(cert.closed_loop):
        raise NumericalError(
            f"LMI witness gives closed-loop radius {cert.spectrum.spectral_radius:.6g}")
    return cert


def _family_or_raise(bm):
    r = rank_tol(bm.X_minus)
    if r < bm.n:
        raise NotInformative(f"X_minus has rank {r} < n = {bm.n}",
                             {"rank": r, "required_rank": bm.n})
    return right_inverse_family(bm.X_minus)


def stabilize_algebraic(bm: BlockMatrices) -> GainCertificate:
    """Stabilizing gain from a right inverse ``F + G H`` of ``X_-``.

    ``H`` is an identity-weight LQ gain for the pair ``(X_+ F, X_+ G)``, whose
    closed loop ``X_+ (F + G H)`` is the one shared by all consistent systems.
    """
    scaled, d = bm.column_normalized()
    fam = _family_or_raise(scaled)
    F, G = fam.F, fam.G
    if G is None:
        cert = _certificate(bm, F, ALGEBRAIC, d=d)
        if not is_stable(cert.closed_loop):
            raise NotInformative(
                "the unique right inverse of X_minus does not give a stable closed loop",
                {"spectrum": cert.spectrum.to_json()})
        return cert
    A_f, B_f = scaled.X_plus @ F, scaled.X_plus @ G
    try:
        _, H = dare_solve(A_f, B_f, np.eye(bm.n), np.eye(G.shape[1]))
    except NotStabilizable as exc:
        raise NotInformative("no right inverse of X_minus gives a stable closed loop",
                             {"detail": str(exc)}) from exc
    cert = _certificate(bm, fam.member(H), ALGEBRAIC, d=d)
    if not is_stable(cert.closed_loop):
        raise NumericalError(f"closed-loop radius {cert.spectrum.spectral_radius:.6g} after synthesis")
    return cert


def _nilpotency_defect(M):
    return float(np.max(np.abs(np.linalg.matrix_power(M, M.shape[0])), initial=0.0))


def deadbeat(bm: BlockMatrices) -> GainCertificate:
    """Gain making the common closed loop ``X_+ X^r`` nilpotent."""
    scaled, d = bm.column_normalized()
    fam = _family_or_raise(scaled)
    F, G = fam.F, fam.G
    if G is None:
        right = F
    else:
        try:
            H = place_spectrum(scaled.X_plus @ F, scaled.X_plus @ G, "origin")
        except NotDeadbeatAssignable as exc:
            raise NotInformative("no right inverse of X_minus gives a nilpotent closed loop",
                                 {"detail": str(exc)}) from exc
        right = fam.member(H)
    cert = _certificate(bm, right, DEADBEAT, d=d)
    defect = _nilpotency_defect(cert.closed_loop)
    if defect >= NILPOTENCY_TOL:
        if G is None:
            raise NotInformative(
                "the unique right inverse of X_minus does not give a nilpotent closed loop",
                {"nth_power_max": defect, "spectrum": cert.spectrum.to_json()})
        raise NumericalError(f"deadbeat closed loop has n-th power of size {defect:.3g}")
    return cert
