"""Informativity of state data for identification, controllability,
stabilizability and stability.

All tests work on the data matrices only. The Hautus-type tests check the
rank of ``X_+ - lam X_-`` at a finite list of candidate values of ``lam``
obtained from one fixed (Moore-Penrose) right inverse. When a test fails, a
system that explains the data but lacks the property is built by moving the
particular consistent system along the left null space of ``[X_-; U_-]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import BlockMatrices
from .errors import DimensionMismatch
from .jsonutil import to_jsonable
from .numerics import (
    EPS,
    get_tolerances,
    hautus_observable,
    left_nullspace_basis,
    rank_tol,
    spectrum,
)

__all__ = [
    "AnalysisVerdict",
    "informative_sysid",
    "informative_controllability",
    "informative_stabilizability",
    "informative_stability",
    "hautus_observable",
]

SYSID = "SysId"
CONTROLLABILITY = "Controllability"
STABILIZABILITY = "Stabilizability"
STABILITY = "Stability"


@dataclass
class AnalysisVerdict:
    property: str
    informative: bool
    certificate: dict = field(default_factory=dict)
    witness: dict | None = None

    def __bool__(self):
        return self.informative

    def to_json(self):
        return {
            "property": self.property,
            "informative": bool(self.informative),
            "certificate": to_jsonable(self.certificate),
            "witness": to_jsonable(self.witness),
        }


def _particular(bm: BlockMatrices):
    """Minimum-norm member ``[A B] = X_+ pinv([X_-; U_-])``."""
    AB = bm.X_plus @ np.linalg.pinv(bm.stacked)
    return AB[:, :bm.n], AB[:, bm.n:]


def informative_sysid(bm: BlockMatrices) -> AnalysisVerdict:
    n, m = bm.n, bm.m
    D = bm.stacked
    r = rank_tol(D)
    cert = {"rank": r, "required_rank": n + m}
    if r == n + m:
        V = np.linalg.pinv(D)
        V1, V2 = V[:, :n], V[:, n:]
        cert.update(V1=V1, V2=V2, A=bm.X_plus @ V1, B=bm.X_plus @ V2)
        return AnalysisVerdict(SYSID, True, cert)
    A0, B0 = _particular(bm)
    N = left_nullspace_basis(D)
    cert.update(particular={"A": A0, "B": B0}, null_dimension=N.shape[0])
    # a second consistent system, differing in the first row
    E = np.zeros((n, n + m))
    E[0] = N[0]
    witness = {"A": A0 + E[:, :n], "B": B0 + E[:, n:]}
    return AnalysisVerdict(SYSID, False, cert, witness)


# ---------------------------------------------------------------------------
# Hautus-type tests
# ---------------------------------------------------------------------------

def _candidates(X_minus, Z):
    """Eigenvalues of ``X_- pinv(Z)``, dropping those that are zero up to round-off."""
    M = X_minus @ np.linalg.pinv(Z)
    mu = np.linalg.eigvals(M)
    cutoff = np.sqrt(EPS) * max(np.linalg.norm(M, 2), EPS)
    return mu[np.abs(mu) > cutoff]


def _dedupe(values, tol=1e-10):
    out = []
    for v in values:
        if not any(abs(v - w) <= tol * max(1.0, abs(v)) for w in out):
            out.append(v)
    return out


def _left_null_vector(M):
    """Unit vector ``z`` with ``z^T M`` as small as possible."""
    U, _, _ = np.linalg.svd(M)
    return U[:, -1].conj()


def _uncontrollable_member(bm: BlockMatrices, lam, fallback_lam):
    """A consistent ``(A, B)`` for which ``lam`` is an uncontrollable eigenvalue."""
    n = bm.n
    A0, B0 = _particular(bm)
    Ab = np.hstack([A0, B0])
    shift = np.hstack([np.eye(n), np.zeros((n, bm.m))])
    z = _left_null_vector(bm.X_plus - lam * bm.X_minus)
    if abs(np.imag(lam)) > 0:
        p, q = z.real, z.imag
        PQ = np.vstack([p, q])
        if rank_tol(PQ) == 2:
            W = z @ (Ab - lam * shift)
            eta_zeta = np.linalg.lstsq(PQ, np.eye(2), rcond=None)[0]
            Ab = Ab - eta_zeta @ np.vstack([W.real, W.imag])
            return _witness(bm, Ab, lam)
        # z is a complex multiple of a real vector annihilating X_+ and X_-
        lam = fallback_lam
        z = _left_null_vector(bm.X_plus - lam * bm.X_minus)
    z = np.real(z)
    z = z / np.linalg.norm(z)
    Ab = Ab - np.outer(z, z @ (Ab - lam * shift))
    return _witness(bm, Ab, lam)


def _witness(bm, Ab, lam):
    n = bm.n
    A, B = Ab[:, :n], Ab[:, n:]
    residual = np.max(np.abs(bm.X_plus - A @ bm.X_minus - B @ bm.U_minus), initial=0.0)
    return {"A": A, "B": B, "lambda": complex(lam), "data_residual": float(residual)}


def _as_real_if_real(lam):
    lam = complex(lam)
    return lam.real if abs(lam.imag) <= 1e-12 * max(1.0, abs(lam)) else lam


def _refine_candidate(X_plus, X_minus, lam, steps=4):
    """Move ``lam`` toward a local minimiser of ``sigma_min(X_+ - lam X_-)``.

    Computed candidates carry eigenvalue rounding that can lift the smallest
    singular value of an exactly singular pencil above the rank threshold.
    Alternates between the left singular vector and the least-squares
    ``lam`` for that vector; never returns a worse point than it was given.
    """
    real = np.isrealobj(lam) or np.imag(lam) == 0
    best = lam
    best_s = np.linalg.svd(X_plus - lam * X_minus, compute_uv=False)[-1]
    for _ in range(steps):
        U, _, _ = np.linalg.svd(X_plus - lam * X_minus)
        w = U[:, -1].conj()
        a, b = w @ X_plus, w @ X_minus
        denom = np.vdot(b, b).real
        if denom == 0.0:
            break
        lam = np.vdot(b, a) / denom
        if real:
            lam = lam.real
        s = np.linalg.svd(X_plus - lam * X_minus, compute_uv=False)[-1]
        if s >= best_s:
            break
        best, best_s = lam, s
    return best


def _hautus(bm, prop, base_lam, base_matrix, lam_of_mu, keep, fallback_lam):
    n = bm.n
    scale_plus = np.linalg.norm(bm.X_plus, 2)
    scale_minus = np.linalg.norm(bm.X_minus, 2)
    base_rank = rank_tol(base_matrix, scale=scale_plus + abs(base_lam) * scale_minus)
    rows = [{"lambda": complex(base_lam), "rank": base_rank}]
    failed = None if rows[0]["rank"] == n else base_lam
    if failed is None:
        lams = [_as_real_if_real(lam_of_mu(mu)) for mu in _candidates(bm.X_minus, base_matrix)]
        for lam in _dedupe([lam for lam in lams if keep(lam)]):
            refined = _as_real_if_real(_refine_candidate(bm.X_plus, bm.X_minus, lam))
            if keep(refined):
                lam = refined
            r = rank_tol(bm.X_plus - lam * bm.X_minus, scale=scale_plus + abs(lam) * scale_minus)
            rows.append({"lambda": complex(lam), "rank": r})
            if r < n and failed is None:
                failed = lam
    cert = {"required_rank": n, "candidates": rows}
    if failed is None:
        return AnalysisVerdict(prop, True, cert)
    cert["failed_lambda"] = complex(failed)
    return AnalysisVerdict(prop, False, cert, _uncontrollable_member(bm, failed, fallback_lam))


def informative_controllability(bm: BlockMatrices) -> AnalysisVerdict:
    """Every system consistent with the data is controllable.

    Holds iff ``rank X_+ = n`` and ``rank(X_+ - lam X_-) = n`` at every
    ``lam = 1/mu`` with ``mu`` a nonzero eigenvalue of ``X_- pinv(X_+)``.
    """
    return _hautus(
        bm, CONTROLLABILITY, 0.0, bm.X_plus,
        lam_of_mu=lambda mu: 1.0 / mu,
        keep=lambda lam: True,
        fallback_lam=0.0,
    )


def informative_stabilizability(bm: BlockMatrices) -> AnalysisVerdict:
    """Every system consistent with the data is stabilizable.

    Same structure as the controllability test with the candidates shifted to
    ``lam = 1 + 1/mu``, ``mu`` a nonzero eigenvalue of ``X_- pinv(X_+ - X_-)``,
    and only candidates with ``|lam| >= 1`` (minus the stability margin) checked.
    """
    margin = get_tolerances().stability_margin
    return _hautus(
        bm, STABILIZABILITY, 1.0, bm.X_plus - bm.X_minus,
        lam_of_mu=lambda mu: 1.0 + 1.0 / mu,
        keep=lambda lam: abs(lam) >= 1.0 - margin,
        fallback_lam=2.0,
    )


# ---------------------------------------------------------------------------
# Stability of autonomous data
# ---------------------------------------------------------------------------

def informative_stability(bm: BlockMatrices) -> AnalysisVerdict:
    """Every autonomous system ``x(t+1) = A x(t)`` consistent with the data is stable.

    Only defined for data without inputs; an all-zero input block is accepted
    and ignored.
    """
    if bm.m and np.any(bm.U_minus != 0):
        raise DimensionMismatch("stability informativity is defined for autonomous data only")
    n = bm.n
    margin = get_tolerances().stability_margin
    r = rank_tol(bm.X_minus)
    cert = {"rank": r, "required_rank": n}
    A0 = bm.X_plus @ np.linalg.pinv(bm.X_minus)
    if r < n:
        v = left_nullspace_basis(bm.X_minus)[0]
        s = 1.0
        A = A0 + s * np.outer(v, v)
        while spectrum(A).spectral_radius < 1.0 and s < 1e12:
            s *= 2.0
            A = A0 + s * np.outer(v, v)
        residual = np.max(np.abs(bm.X_plus - A @ bm.X_minus), initial=0.0)
        return AnalysisVerdict(STABILITY, False, cert,
                               {"A": A, "spectrum": spectrum(A), "data_residual": float(residual)})
    spec = spectrum(A0)
    cert.update(A=A0, spectrum=spec)
    if spec.spectral_radius < 1.0 - margin:
        return AnalysisVerdict(STABILITY, True, cert)
    return AnalysisVerdict(STABILITY, False, cert, {"A": A0, "spectrum": spec, "data_residual": 0.0})
