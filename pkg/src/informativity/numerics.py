"""Dense linear-algebra kernel shared by the analysis and synthesis modules.

Every rank decision in the package goes through :func:`rank_tol`, and every
stability decision through :func:`is_stable`, so that the tolerance policy
lives in one place. The policy can be adjusted for a block of code with
:func:`use_tolerances`.
"""

from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as la

from .errors import (
    DimensionMismatch,
    NonSquare,
    NotDeadbeatAssignable,
    NotStabilizable,
    NumericalError,
    RankDeficient,
    UnobservableUnitCircleMode,
    Unstable,
)

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds in effect.

    rank_scale multiplies the default SVD rank threshold
    ``max(rows, cols) * eps * sigma_max``. A matrix is called stable when its
    spectral radius is below ``1 - stability_margin``. Eigenvalues within
    ``unit_circle_band`` of the unit circle are treated as lying on it.
    Strict LMI blocks must exceed ``strict_lmi * I``.
    """

    rank_scale: float = 1.0
    stability_margin: float = 1e-9
    unit_circle_band: float = 1e-7
    strict_lmi: float = 1e-8

    def as_dict(self):
        return {
            "rank_scale": self.rank_scale,
            "stability_margin": self.stability_margin,
            "unit_circle_band": self.unit_circle_band,
            "strict_lmi": self.strict_lmi,
        }


_TOLERANCES = contextvars.ContextVar("informativity_tolerances", default=Tolerances())


def get_tolerances() -> Tolerances:
    return _TOLERANCES.get()


@contextlib.contextmanager
def use_tolerances(**overrides):
    """Temporarily override fields of the active :class:`Tolerances`."""
    token = _TOLERANCES.set(replace(_TOLERANCES.get(), **overrides))
    try:
        yield _TOLERANCES.get()
    finally:
        _TOLERANCES.reset(token)


def as_matrix(M, name="matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(1, -1)
    elif M.ndim != 2:
        raise DimensionMismatch(f"{name} must be two-dimensional, got shape {M.shape}")
    return M


# ---------------------------------------------------------------------------
# Rank, null spaces, right inverses
# ---------------------------------------------------------------------------

def _rank_threshold(shape, sigma_max):
    return max(shape) * EPS * sigma_max * get_tolerances().rank_scale


def rank_tol(M, scale=None) -> int:
    """Numerical rank: singular values above ``max(rows, cols)*eps*sigma_max``.

    ``scale`` replaces ``sigma_max`` when larger. Pass the magnitude of the
    operands when ``M`` is a computed difference such as ``X - lam Y``, whose
    rounding error is relative to the operands rather than to the result.
    """
    M = np.asarray(M)
    if M.ndim < 2:
        M = np.atleast_2d(M)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    ref = s[0] if scale is None else max(s[0], scale)
    if ref == 0.0:
        return 0
    return int(np.sum(s > _rank_threshold(M.shape, ref)))


def _normalize_signs(vectors, axis):
    """Flip each vector so that its largest-magnitude entry is positive."""
    V = np.array(vectors, dtype=float, copy=True)
    if V.size == 0:
        return V
    if axis == 0:
        idx = np.argmax(np.abs(V), axis=0)
        signs = np.sign(V[idx, np.arange(V.shape[1])])
        signs[signs == 0] = 1.0
        return V * signs
    idx = np.argmax(np.abs(V), axis=1)
    signs = np.sign(V[np.arange(V.shape[0]), idx])
    signs[signs == 0] = 1.0
    return V * signs[:, None]


def left_nullspace_basis(M) -> np.ndarray:
    """Orthonormal rows spanning ``{v : v^T M = 0}``."""
    M = as_matrix(M)
    rows = M.shape[0]
    if M.shape[1] == 0:
        return np.eye(rows)
    U, _, _ = np.linalg.svd(M, full_matrices=True)
    r = rank_tol(M)
    return _normalize_signs(U[:, r:].T, axis=1)


def nullspace_basis(M) -> np.ndarray:
    """Orthonormal columns spanning ``{v : M v = 0}``."""
    M = as_matrix(M)
    cols = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(cols)
    _, _, Vt = np.linalg.svd(M, full_matrices=True)
    r = rank_tol(M)
    return _normalize_signs(Vt[r:].T, axis=0)


def row_space_basis(M) -> np.ndarray:
    """Orthonormal rows spanning the row space of ``M``."""
    M = as_matrix(M)
    if M.size == 0:
        return np.zeros((0, M.shape[1]))
    _, _, Vt = np.linalg.svd(M, full_matrices=False)
    return Vt[: rank_tol(M)]


@dataclass
class RightInverseFamily:
    """All right inverses ``F + G H`` of a full-row-rank matrix.

    ``F`` is the Moore-Penrose right inverse and the columns of ``G`` are an
    orthonormal basis of the null space; ``G`` is ``None`` when the matrix is
    square.
    """

    F: np.ndarray
    G: np.ndarray | None

    def member(self, H=None) -> np.ndarray:
        if self.G is None or H is None:
            return self.F.copy()
        return self.F + self.G @ np.asarray(H, dtype=float)


def right_inverse_family(X_minus) -> RightInverseFamily:
    X = as_matrix(X_minus, "X_minus")
    n, T = X.shape
    if rank_tol(X) != n:
        raise RankDeficient(f"X_minus has rank {rank_tol(X)} < {n}; no right inverse exists")
    F = np.linalg.pinv(X)
    G = nullspace_basis(X) if T > n else None
    return RightInverseFamily(F=F, G=G)


# ---------------------------------------------------------------------------
# Spectra and stability
# ---------------------------------------------------------------------------

@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    spectral_radius: float

    def to_json(self):
        return {
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "spectral_radius": float(self.spectral_radius),
        }


def _sort_eigenvalues(ev):
    ev = np.asarray(ev, dtype=complex)
    order = np.lexsort((np.angle(ev), np.round(np.abs(ev), 12)))
    return ev[order]


def spectrum(M) -> SpectrumReport:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NonSquare(f"spectrum needs a square matrix, got shape {M.shape}")
    if M.shape[0] == 0:
        return SpectrumReport(np.zeros(0, dtype=complex), 0.0)
    ev = _sort_eigenvalues(np.linalg.eigvals(M))
    return SpectrumReport(ev, float(np.max(np.abs(ev))))


def spectral_radius(M) -> float:
    return spectrum(M).spectral_radius


def is_stable(M, margin=None) -> bool:
    """Schur stability with the active stability margin."""
    if margin is None:
        margin = get_tolerances().stability_margin
    return spectral_radius(M) < 1.0 - margin


# ---------------------------------------------------------------------------
# Model-based Hautus tests
# ---------------------------------------------------------------------------

def hautus_rank(A, B, lam) -> int:
    """Rank of ``[A - lam I, B]``."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    scale = np.linalg.norm(A, 2) + abs(lam) + (np.linalg.norm(B, 2) if B.size else 0.0)
    return rank_tol(np.hstack([A - lam * np.eye(n), B]), scale=scale)


def _uncontrollable_eigenvalues(A, B):
    """Eigenvalues of ``A`` restricted to the complement of the controllable subspace.

    Computed from the orthogonal staircase split rather than by rank tests at
    computed eigenvalues, which miss modes whose eigenvalues carry rounding
    errors far above machine precision.
    """
    _, Vu = controllability_staircase(A, B)
    if Vu.shape[1] == 0:
        return np.zeros(0, dtype=complex)
    return np.linalg.eigvals(Vu.T @ A @ Vu)


def is_stabilizable(A, B) -> bool:
    A = as_matrix(A, "A")
    n = A.shape[0]
    if n == 0:
        return True
    B = np.asarray(B, dtype=float).reshape(n, -1)
    margin = get_tolerances().stability_margin
    return bool(np.all(np.abs(_uncontrollable_eigenvalues(A, B)) < 1.0 - margin))


def is_controllable(A, B) -> bool:
    A = as_matrix(A, "A")
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    return controllability_staircase(A, B)[1].shape[1] == 0


def is_detectable(C, A) -> bool:
    A = as_matrix(A, "A")
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    return is_stabilizable(A.T, C.T)


def hautus_observable(Q, A, lam) -> bool:
    """Whether ``lam`` passes the observability rank test ``rank [A - lam I; Q] = n``."""
    A = as_matrix(A, "A")
    n = A.shape[0]
    Q = np.asarray(Q, dtype=float).reshape(-1, n)
    scale = np.linalg.norm(A, 2) + abs(lam) + (np.linalg.norm(Q, 2) if Q.size else 0.0)
    return rank_tol(np.vstack([A - lam * np.eye(n), Q]), scale=scale) == n


def unit_circle_eigenvalues(A) -> np.ndarray:
    band = get_tolerances().unit_circle_band
    ev = np.linalg.eigvals(as_matrix(A, "A"))
    return ev[np.abs(np.abs(ev) - 1.0) < band]


# ---------------------------------------------------------------------------
# Lyapunov and Riccati equations
# ---------------------------------------------------------------------------

def lyapunov_solve(M, W) -> np.ndarray:
    """Solve ``P - M^T P M = W`` for stable ``M``."""
    M = as_matrix(M, "M")
    W = as_matrix(W, "W")
    if M.shape[0] != M.shape[1]:
        raise NonSquare("M must be square")
    if W.shape != M.shape:
        raise DimensionMismatch(f"W has shape {W.shape}, expected {M.shape}")
    if spectral_radius(M) >= 1.0:
        raise Unstable(f"M has spectral radius {spectral_radius(M):.6g} >= 1")
    P = la.solve_discrete_lyapunov(M.T, W)
    return 0.5 * (P + P.T)


def riccati_map(P, A, B, Q, R) -> np.ndarray:
    """One step of the Riccati recursion ``A'PA - A'PB (R + B'PB)^-1 B'PA + Q``."""
    BtPA = B.T @ P @ A
    out = A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA) + Q
    return 0.5 * (out + out.T)


def riccati_gain(P, A, B, R) -> np.ndarray:
    return -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


def dare_residual(P, A, B, Q, R) -> float:
    return float(np.max(np.abs(riccati_map(P, A, B, Q, R) - P), initial=0.0))


def _check_weights(Q, R, n, m):
    if Q.shape != (n, n) or R.shape != (m, m):
        raise DimensionMismatch(f"weights have shapes {Q.shape}, {R.shape}; expected {(n, n)}, {(m, m)}")


def _doubling(A, B, Q, R, tol=1e-12, max_iter=80):
    """Structure-preserving doubling iteration; returns None if it does not settle."""
    n = A.shape[0]
    Ak = A.copy()
    Gk = B @ np.linalg.solve(R, B.T)
    Gk = 0.5 * (Gk + Gk.T)
    Hk = Q.copy()
    eye = np.eye(n)
    for _ in range(max_iter):
        W = eye + Gk @ Hk
        try:
            WA = np.linalg.solve(W, Ak)
            WG = np.linalg.solve(W, Gk)
        except np.linalg.LinAlgError:
            return None
        H_next = Hk + Ak.T @ Hk @ WA
        G_next = Gk + Ak @ WG @ Ak.T
        A_next = Ak @ WA
        H_next = 0.5 * (H_next + H_next.T)
        G_next = 0.5 * (G_next + G_next.T)
        if not np.all(np.isfinite(H_next)):
            return None
        delta = np.max(np.abs(H_next - Hk))
        Ak, Gk, Hk = A_next, G_next, H_next
        if delta < tol * max(1.0, np.max(np.abs(Hk))):
            return Hk
    return None


def _policy_iteration(A, B, Q, R, K, tol=1e-13, max_iter=100):
    """Newton-Kleinman (Hewer) iteration from a stabilizing gain."""
    P_prev = None
    for _ in range(max_iter):
        Mcl = A + B @ K
        P = lyapunov_solve(Mcl, Q + K.T @ R @ K)
        K = riccati_gain(P, A, B, R)
        if P_prev is not None and np.max(np.abs(P - P_prev)) < tol * max(1.0, np.max(np.abs(P))):
            return P
        P_prev = P
    return P


def _acceptable_dare(P, A, B, Q, R):
    if P is None or not np.all(np.isfinite(P)):
        return False
    scale = max(1.0, np.max(np.abs(P)))
    if dare_residual(P, A, B, Q, R) > 1e-9 * scale:
        return False
    if np.min(np.linalg.eigvalsh(P), initial=0.0) < -1e-9 * scale:
        return False
    return is_stable(A + B @ riccati_gain(P, A, B, R))


def dare_solve(A, B, Q, R):
    """Largest symmetric solution of the DARE and the associated optimal gain.

    Returns ``(P_plus, K)`` with ``K = -(R + B'P B)^-1 B'P A``, so that the
    closed loop is ``A + B K``. Doubling is tried first; when it fails to
    settle on the stabilizing solution (for instance when ``(Q, A)`` is not
    detectable) the solution is obtained by policy iteration started from a
    stabilizing gain.

    Raises
    ------
    NotStabilizable
        If ``(A, B)`` is not stabilizable.
    UnobservableUnitCircleMode
        If an eigenvalue of ``A`` on the unit circle is not ``(Q, A)``-observable.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    m = B.shape[1]
    Q = as_matrix(Q, "Q")
    R = as_matrix(R, "R")
    _check_weights(Q, R, n, m)
    Q = 0.5 * (Q + Q.T)
    R = 0.5 * (R + R.T)
    if not is_stabilizable(A, B):
        raise NotStabilizable("(A, B) is not stabilizable")
    for lam in unit_circle_eigenvalues(A):
        if not hautus_observable(Q, A, lam):
            raise UnobservableUnitCircleMode(f"eigenvalue {lam:.6g} on the unit circle is not (Q, A)-observable")

    P = _doubling(A, B, Q, R)
    if not _acceptable_dare(P, A, B, Q, R):
        P0 = _doubling(A, B, np.eye(n), R)
        if P0 is not None and is_stable(A + B @ riccati_gain(P0, A, B, R)):
            K0 = riccati_gain(P0, A, B, R)
        else:
            K0 = place_spectrum(A, B, "unit-disk")
        P = _policy_iteration(A, B, Q, R, K0)
        if not _acceptable_dare(P, A, B, Q, R):
            raise NumericalError("DARE solver did not converge to the stabilizing solution")
    return P, riccati_gain(P, A, B, R)


# ---------------------------------------------------------------------------
# Pole placement
# ---------------------------------------------------------------------------

def controllability_staircase(A, B):
    """Orthogonal split into controllable and uncontrollable coordinates.

    Returns ``(Vc, Vu)`` with orthonormal columns such that ``Vc`` spans the
    controllable subspace of ``(A, B)`` and ``Vu`` its orthogonal complement.
    In the coordinates ``[Vc Vu]`` the pair is block upper triangular.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    scale = max(np.linalg.norm(A, 2) if n else 0.0, np.linalg.norm(B, 2) if B.size else 0.0, EPS)
    tol = max(n, B.shape[1], 1) * EPS * scale * get_tolerances().rank_scale * 10
    basis = np.zeros((n, 0))
    block = B
    # directions split off a small singular value carry proportionally larger
    # rounding, which the next step inherits
    growth = 1.0
    while basis.shape[1] < n and block.size:
        block = block - basis @ (basis.T @ block)
        # second pass for orthogonality
        block = block - basis @ (basis.T @ block)
        U, s, _ = np.linalg.svd(block, full_matrices=False)
        r = int(np.sum(s > tol * growth))
        if r == 0:
            break
        growth = max(growth, scale / s[r - 1])
        new = U[:, :r]
        basis = np.hstack([basis, new])
        block = A @ new
    if basis.shape[1] == n:
        return basis, np.zeros((n, 0))
    full, _ = np.linalg.qr(np.hstack([basis, np.eye(n)]))
    complement = full[:, basis.shape[1]:n]
    complement = complement - basis @ (basis.T @ complement)
    complement, _ = np.linalg.qr(complement)
    return basis, complement


def _char_poly_eval(A, roots):
    coeffs = np.real_if_close(np.poly(roots), tol=1e6)
    if np.iscomplexobj(coeffs):
        raise ValueError("target eigenvalues must be closed under conjugation")
    n = A.shape[0]
    out = np.zeros_like(A)
    for c in coeffs:
        out = out @ A + c * np.eye(n)
    return out


def _ackermann(A, b, roots):
    n = A.shape[0]
    ctrb = np.empty((n, n))
    col = b.reshape(-1)
    for i in range(n):
        ctrb[:, i] = col
        col = A @ col
    last_row = np.linalg.solve(ctrb.T, np.eye(n)[:, -1])
    return -(last_row @ _char_poly_eval(A, roots)).reshape(1, n), np.linalg.cond(ctrb)


def _place_controllable(A, B, roots, rng, attempts=25):
    """Multi-input placement through a random single-input reduction."""
    n, m = B.shape
    if n == 0:
        return np.zeros((m, 0))
    best, best_err = None, np.inf
    scale = max(np.linalg.norm(A, 2), 1.0) / max(np.linalg.norm(B, 2), EPS)
    for attempt in range(attempts):
        if m == 1 and attempt == 0:
            g, F0 = np.ones(1), np.zeros((1, n))
        else:
            g = rng.standard_normal(m)
            g /= np.linalg.norm(g)
            F0 = np.zeros((m, n)) if attempt == 0 else scale * rng.standard_normal((m, n))
        A1 = A + B @ F0
        b = B @ g
        try:
            k, cond = _ackermann(A1, b, roots)
        except np.linalg.LinAlgError:
            continue
        if not np.isfinite(cond) or cond > 1e12:
            continue
        M = F0 + np.outer(g, k)
        Acl = A + B @ M
        err = np.max(np.abs(_char_poly_eval(Acl, roots)))
        err /= max(1.0, np.max(np.abs(Acl))) ** n
        if err < best_err:
            best, best_err = M, err
        if best_err < 1e-13:
            break
    if best is None:
        raise NumericalError("pole placement failed on every reduction attempt")
    return best


def place_spectrum(A, B, target="unit-disk", seed=0) -> np.ndarray:
    """Feedback ``M`` putting the spectrum of ``A + B M`` in ``target``.

    ``target`` is ``"unit-disk"``, ``"origin"`` (deadbeat), or an explicit
    multiset of ``n`` eigenvalues closed under conjugation. Uncontrollable
    eigenvalues cannot move; they must already satisfy the target.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    m = B.shape[1]
    rng = np.random.default_rng(seed)
    Vc, Vu = controllability_staircase(A, B)
    nc = Vc.shape[1]
    Ac = Vc.T @ A @ Vc
    Bc = Vc.T @ B
    unc = np.linalg.eigvals(Vu.T @ A @ Vu) if Vu.shape[1] else np.zeros(0)

    if isinstance(target, str):
        if target == "origin":
            scale = max(1.0, np.max(np.abs(A), initial=0.0))
            if unc.size and np.max(np.abs(unc)) > 1e-8 * scale:
                raise NotDeadbeatAssignable(
                    f"uncontrollable eigenvalues {unc} are not all zero")
            roots = np.zeros(nc)
        elif target == "unit-disk":
            if unc.size and np.max(np.abs(unc)) >= 1.0 - 1e-6:
                raise NotStabilizable(f"uncontrollable eigenvalues {unc} are not inside the unit disk")
            roots = np.linspace(-0.5, 0.5, nc) if nc > 1 else np.zeros(nc)
        else:
            raise ValueError(f"unknown target region {target!r}")
    else:
        wanted = list(_sort_eigenvalues(np.asarray(target, dtype=complex).ravel()))
        if len(wanted) != n:
            raise DimensionMismatch(f"need {n} target eigenvalues, got {len(wanted)}")
        for lam in unc:
            hit = int(np.argmin([abs(lam - w) for w in wanted]))
            if abs(lam - wanted[hit]) > 1e-8 * max(1.0, abs(lam)):
                raise NotStabilizable(f"uncontrollable eigenvalue {lam} is not in the target set")
            wanted.pop(hit)
        roots = np.array(wanted)

    if nc == 0:
        return np.zeros((m, n))
    Mc = _place_controllable(Ac, Bc, roots, rng)
    return Mc @ Vc.T


# ---------------------------------------------------------------------------
# Row-space intersection
# ---------------------------------------------------------------------------

def rowspace_intersection(A, B, cos_threshold=1.0 - 1e-8) -> np.ndarray:
    """Orthonormal rows spanning ``rs(A) ∩ rs(B)``, via principal angles."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"column counts differ: {A.shape[1]} vs {B.shape[1]}")
    Va = row_space_basis(A)
    Vb = row_space_basis(B)
    if Va.shape[0] == 0 or Vb.shape[0] == 0:
        return np.zeros((0, A.shape[1]))
    U, s, _ = np.linalg.svd(Va @ Vb.T)
    d = int(np.sum(s > cos_threshold))
    basis = U[:, :d].T @ Va
    # re-orthonormalize against round-off
    if d:
        q, _ = np.linalg.qr(basis.T)
        basis = q.T
    return basis
