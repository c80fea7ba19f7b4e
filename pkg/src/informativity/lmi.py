"""Small dense semidefinite solver for the LMIs that appear in data-driven design.

Problems are built from matrix-valued affine expressions of named decision
variables::

    prob = LmiProblem()
    Theta = prob.variable("Theta", (T, n))
    prob.symmetric_constraint(X_minus @ Theta)
    prob.psd(bmat([[X_minus @ Theta, X_plus @ Theta],
                   [(X_plus @ Theta).T, X_minus @ Theta]]), strict=True)
    sol = solve_feasibility(prob)

Linear equality constraints are eliminated by a null-space parametrization of
the decision vector. Each semidefinite block is then restricted to the joint
range of its coefficient matrices (a block whose coefficients all vanish on
some direction cannot be strictly positive there, and a non-strict block is
unaffected by the restriction). The remaining problem is solved with a
log-det barrier path-following method: a phase-one problem maximizes the
smallest eigenvalue margin, and for trace maximization a second phase follows
the central path from the phase-one point. Dual matrices are the usual
barrier estimates ``Z_i = G_i^{-1} / tau``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import LmiInfeasible, LmiUnbounded, MalformedProblem
from .jsonutil import to_jsonable
from .numerics import get_tolerances, nullspace_basis

FEASIBLE = "Feasible"
INFEASIBLE = "Infeasible"
OPTIMAL = "Optimal"
NUMERICAL_FAILURE = "NumericalFailure"


class Affine:
    """Matrix affine in the decision vector: ``const + sum_k z_k * coef[k]``."""

    __array_priority__ = 1000

    def __init__(self, const, coef):
        self.const = np.asarray(const, dtype=float)
        self.coef = np.asarray(coef, dtype=float)
        if self.const.ndim != 2 or self.coef.ndim != 3 or self.coef.shape[1:] != self.const.shape:
            raise MalformedProblem("inconsistent affine expression shapes")

    @classmethod
    def constant(cls, M, nvars=0):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(M, np.zeros((nvars,) + M.shape))

    @property
    def shape(self):
        return self.const.shape

    @property
    def nvars(self):
        return self.coef.shape[0]

    def _padded(self, nvars):
        if self.nvars == nvars:
            return self.coef
        pad = np.zeros((nvars - self.nvars,) + self.shape)
        return np.concatenate([self.coef, pad], axis=0)

    def _lift(self, other):
        if isinstance(other, Affine):
            return other
        return Affine.constant(other, 0)

    def __add__(self, other):
        other = self._lift(other)
        if other.shape != self.shape:
            raise MalformedProblem(f"cannot add shapes {self.shape} and {other.shape}")
        N = max(self.nvars, other.nvars)
        return Affine(self.const + other.const, self._padded(N) + other._padded(N))

    __radd__ = __add__

    def __neg__(self):
        return Affine(-self.const, -self.coef)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) + (-self)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            raise MalformedProblem("use @ for matrix products")
        return Affine(self.const * scalar, self.coef * scalar)

    __rmul__ = __mul__

    def __matmul__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(self.const @ M, self.coef @ M)

    def __rmatmul__(self, M):
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return Affine(M @ self.const, np.einsum("ij,kjl->kil", M, self.coef))

    @property
    def T(self):
        return Affine(self.const.T, np.transpose(self.coef, (0, 2, 1)))

    def trace(self):
        if self.shape[0] != self.shape[1]:
            raise MalformedProblem("trace of a non-square expression")
        return Affine(np.trace(self.const).reshape(1, 1),
                      np.trace(self.coef, axis1=1, axis2=2).reshape(-1, 1, 1))

    def value(self, z):
        z = np.asarray(z, dtype=float)
        N = self.nvars
        return self.const + np.tensordot(z[:N], self.coef, axes=1)


def bmat(blocks) -> Affine:
    """Assemble a block matrix from affine expressions and constant arrays."""
    rows = []
    N = max((b.nvars for row in blocks for b in row if isinstance(b, Affine)), default=0)
    for row in blocks:
        items = [b if isinstance(b, Affine) else Affine.constant(b, 0) for b in row]
        items = [Affine(b.const, b._padded(N)) for b in items]
        heights = {b.shape[0] for b in items}
        if len(heights) != 1:
            raise MalformedProblem("blocks in a row must share their height")
        rows.append(Affine(np.hstack([b.const for b in items]),
                           np.concatenate([b.coef for b in items], axis=2)))
    widths = {r.shape[1] for r in rows}
    if len(widths) != 1:
        raise MalformedProblem("block rows must share their width")
    return Affine(np.vstack([r.const for r in rows]), np.concatenate([r.coef for r in rows], axis=1))


@dataclass
class _Variable:
    name: str
    shape: tuple
    offset: int
    symmetric: bool

    @property
    def size(self):
        if self.symmetric:
            n = self.shape[0]
            return n * (n + 1) // 2
        return self.shape[0] * self.shape[1]

    def unpack(self, z):
        v = z[self.offset:self.offset + self.size]
        if not self.symmetric:
            return v.reshape(self.shape)
        n = self.shape[0]
        M = np.zeros((n, n))
        M[np.triu_indices(n)] = v
        return M + np.triu(M, 1).T


@dataclass
class _Constraint:
    kind: str  # "psd", "zero", "symmetric"
    expr: Affine
    strict: bool = False
    name: str = ""


class LmiProblem:
    """Decision variables, affine matrix constraints and an optional trace objective."""

    def __init__(self):
        self._vars: list[_Variable] = []
        self.constraints: list[_Constraint] = []
        self.objective: Affine | None = None

    @property
    def nvars(self):
        return sum(v.size for v in self._vars)

    def variable(self, name, shape) -> Affine:
        shape = tuple(shape)
        var = _Variable(name, shape, self.nvars, symmetric=False)
        self._vars.append(var)
        N = self.nvars
        coef = np.zeros((N,) + shape)
        for k in range(var.size):
            coef[var.offset + k].flat[k] = 1.0
        return Affine(np.zeros(shape), coef)

    def symmetric(self, name, n) -> Affine:
        var = _Variable(name, (n, n), self.nvars, symmetric=True)
        self._vars.append(var)
        coef = np.zeros((self.nvars, n, n))
        for k, (i, j) in enumerate(zip(*np.triu_indices(n))):
            coef[var.offset + k, i, j] = 1.0
            coef[var.offset + k, j, i] = 1.0
        return Affine(np.zeros((n, n)), coef)

    def psd(self, expr: Affine, strict=False, name=""):
        """``expr ⪰ 0`` (or ``≻ 0`` with ``strict=True``); ``expr`` must be square."""
        if expr.shape[0] != expr.shape[1]:
            raise MalformedProblem(f"semidefinite constraint {name!r} is not square: {expr.shape}")
        self.constraints.append(_Constraint("psd", expr, strict, name))

    def nsd(self, expr: Affine, strict=False, name=""):
        self.psd(-expr, strict, name)

    def zero(self, expr: Affine, name=""):
        self.constraints.append(_Constraint("zero", expr, False, name))

    def symmetric_constraint(self, expr: Affine, name=""):
        if expr.shape[0] != expr.shape[1]:
            raise MalformedProblem(f"symmetry constraint {name!r} needs a square expression")
        self.constraints.append(_Constraint("symmetric", expr, False, name))

    def maximize_trace(self, expr: Affine):
        if expr.shape[0] != expr.shape[1]:
            raise MalformedProblem("trace objective needs a square expression")
        self.objective = expr

    def unpack(self, z) -> dict:
        return {v.name: v.unpack(z) for v in self._vars}

    def pack(self, values: dict) -> np.ndarray:
        """Inverse of :meth:`unpack`; symmetric variables read their upper triangle."""
        z = np.zeros(self.nvars)
        for v in self._vars:
            M = np.asarray(values[v.name], dtype=float).reshape(v.shape)
            z[v.offset:v.offset + v.size] = M[np.triu_indices(v.shape[0])] if v.symmetric else M.ravel()
        return z

    def violation(self, values: dict, eps=None) -> float:
        """Worst constraint violation at the given variable values (0 if all hold).

        Strict blocks count as violated below ``eps`` (the active strict
        tolerance by default).
        """
        eps = get_tolerances().strict_lmi if eps is None else eps
        return _violation(self, self.pack(values), eps)


@dataclass
class LmiSolution:
    status: str
    values: dict = field(default_factory=dict)
    z: np.ndarray | None = None
    worst_violation: float = float("nan")
    min_eigenvalues: list = field(default_factory=list)
    objective: float | None = None
    duality_gap: float | None = None
    kkt_residual: float | None = None
    dual: list | None = None
    certificate: dict | None = None
    epsilon: float = 1e-8
    message: str = ""

    @property
    def ok(self):
        return self.status in (FEASIBLE, OPTIMAL)

    def to_json(self):
        out = {
            "status": self.status,
            "worst_violation": float(self.worst_violation),
            "min_eigenvalues": [float(v) for v in self.min_eigenvalues],
            "epsilon": self.epsilon,
            "message": self.message,
        }
        if self.objective is not None:
            out["objective"] = float(self.objective)
        if self.duality_gap is not None:
            out["duality_gap"] = float(self.duality_gap)
        if self.kkt_residual is not None:
            out["kkt_residual"] = float(self.kkt_residual)
        if self.certificate is not None:
            out["certificate"] = to_jsonable(self.certificate)
        return out


# ---------------------------------------------------------------------------
# Reduction: equality elimination and block range restriction
# ---------------------------------------------------------------------------

@dataclass
class _Block:
    index: int          # position among the problem's psd constraints
    strict: bool
    scale: float        # block was divided by this
    W: np.ndarray       # columns: basis of the retained range (size x r)
    F0: np.ndarray      # r x r
    F: np.ndarray       # (d, r, r)


@dataclass
class _Reduced:
    z0: np.ndarray
    Nz: np.ndarray
    blocks: list
    c: np.ndarray | None
    c0: float
    homogeneous: bool


def _equalities(problem, N):
    rows, rhs = [], []
    for con in problem.constraints:
        if con.kind == "zero":
            e = con.expr
            coef = e._padded(N).reshape(N, -1).T
            rows.append(coef)
            rhs.append(-e.const.ravel())
        elif con.kind == "symmetric":
            d = con.expr - con.expr.T
            iu = np.triu_indices(d.shape[0], 1)
            coef = d._padded(N)[:, iu[0], iu[1]].T
            rows.append(coef)
            rhs.append(-d.const[iu])
    if not rows:
        return np.zeros((0, N)), np.zeros(0)
    return np.vstack(rows), np.concatenate(rhs)


def _range_basis(mats, rel_tol=1e-11):
    stack = np.hstack(mats) if mats else np.zeros((0, 0))
    if stack.size == 0:
        return np.zeros((stack.shape[0], 0))
    U, s, _ = np.linalg.svd(stack, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros((stack.shape[0], 0))
    return U[:, s > rel_tol * s[0]]


def _reduce(problem):
    N = problem.nvars
    A_eq, b_eq = _equalities(problem, N)
    if A_eq.shape[0]:
        z0, *_ = np.linalg.lstsq(A_eq, b_eq, rcond=None)
        resid = np.max(np.abs(A_eq @ z0 - b_eq), initial=0.0)
        if resid > 1e-9 * max(1.0, np.max(np.abs(b_eq), initial=0.0)):
            return None, {"reason": "linear equality constraints are inconsistent",
                          "equality_residual": float(resid)}
        Nz = nullspace_basis(A_eq)
    else:
        z0 = np.zeros(N)
        Nz = np.eye(N)
    d = Nz.shape[1]

    blocks = []
    psd_index = 0
    for con in problem.constraints:
        if con.kind != "psd":
            continue
        coef = con.expr._padded(N)
        G0 = con.expr.const + np.tensordot(z0, coef, axes=1)
        G = np.tensordot(Nz.T, coef, axes=1) if d else np.zeros((0,) + G0.shape)
        G0 = 0.5 * (G0 + G0.T)
        G = 0.5 * (G + np.transpose(G, (0, 2, 1)))
        W = _range_basis([G0] + list(G))
        size = G0.shape[0]
        if W.shape[1] < size and con.strict:
            P = np.eye(size) - W @ W.T
            return None, {
                "reason": f"strict block {con.name or psd_index} vanishes on a "
                          f"{size - W.shape[1]}-dimensional subspace for every value of the variables",
                "block": psd_index,
                "dual": (P / np.trace(P)).tolist(),
                "pairing": 0.0,
            }
        if W.shape[1] == 0:
            psd_index += 1
            continue
        F0 = W.T @ G0 @ W
        F = np.einsum("ai,kab,bj->kij", W, G, W) if d else np.zeros((0,) + F0.shape)
        scale = max(np.max(np.abs(F0)), np.max(np.abs(F), initial=0.0))
        scale = scale if scale > 0 else 1.0
        blocks.append(_Block(psd_index, con.strict, scale, W, F0 / scale, F / scale))
        psd_index += 1

    c = None
    c0 = 0.0
    if problem.objective is not None:
        tr = problem.objective.trace()
        ccoef = tr._padded(N).reshape(N)
        c = Nz.T @ ccoef
        c0 = float(tr.const[0, 0] + ccoef @ z0)
    homogeneous = all(np.max(np.abs(b.F0), initial=0.0) == 0.0 for b in blocks)
    return _Reduced(z0, Nz, blocks, c, c0, homogeneous), None


# ---------------------------------------------------------------------------
# Barrier path following
# ---------------------------------------------------------------------------

class _Barrier:
    """Log-det barrier for blocks ``F0 + sum x_k F_k`` plus linear slacks ``h + G x``."""

    def __init__(self, blocks, lin_h, lin_G):
        self.blocks = blocks      # list of (F0, F) with F shape (nx, r, r)
        self.h = lin_h
        self.Gl = lin_G
        self.nu = sum(F0.shape[0] for F0, _ in blocks) + len(lin_h)

    def matrices(self, x):
        return [F0 + np.tensordot(x, F, axes=1) for F0, F in self.blocks]

    def slacks(self, x):
        return self.h + self.Gl @ x

    def value(self, x):
        """Barrier value, or ``inf`` outside the interior."""
        total = 0.0
        for M in self.matrices(x):
            try:
                L = np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                return np.inf
            total -= 2.0 * np.sum(np.log(np.diag(L)))
        s = self.slacks(x)
        if np.any(s <= 0):
            return np.inf
        return total - np.sum(np.log(s))

    def derivatives(self, x):
        nx = len(x)
        g = np.zeros(nx)
        H = np.zeros((nx, nx))
        for (F0, F), M in zip(self.blocks, self.matrices(x)):
            L = np.linalg.cholesky(M)
            Linv = la.solve_triangular(L, np.eye(L.shape[0]), lower=True)
            S = Linv @ F @ Linv.T
            flat = S.reshape(nx, -1)
            g -= np.trace(S, axis1=1, axis2=2)
            H += flat @ flat.T
        s = self.slacks(x)
        w = self.Gl / s[:, None]
        g -= w.sum(axis=0)
        H += w.T @ w
        return g, H

    def duals(self, x, tau, c=None):
        """Dual estimates at ``x``.

        With ``c`` given, the estimates are corrected by one Newton step so that
        they satisfy dual stationarity to working precision.
        """
        mats = self.matrices(x)
        invs = [np.linalg.inv(M) for M in mats]
        s = self.slacks(x)
        if c is None:
            Zs = [Mi / tau for Mi in invs]
            return [0.5 * (Z + Z.T) for Z in Zs], 1.0 / (tau * s)
        g, H = self.derivatives(x)
        dx = -np.linalg.lstsq(H, g - tau * c, rcond=None)[0]
        Zs = []
        for (F0, F), Mi in zip(self.blocks, invs):
            dF = np.tensordot(dx, F, axes=1)
            Z = (Mi - Mi @ dF @ Mi) / tau
            Zs.append(0.5 * (Z + Z.T))
        lin = (1.0 / s - (self.Gl @ dx) / s**2) / tau
        return Zs, lin


def _center(barrier, c, tau, x, max_iter=200, tol=1e-10):
    """Minimize ``-tau c'x + barrier(x)`` by damped Newton from an interior ``x``.

    Uses the self-concordant step length ``1 / (1 + lambda)`` outside the
    quadratic convergence region, so no function values are compared; that
    keeps the iteration working when the barrier value is large.
    """
    prev = np.inf
    for _ in range(max_iter):
        g, H = barrier.derivatives(x)
        g = g - tau * c
        try:
            dx = -la.cho_solve(la.cho_factor(H), g)
        except la.LinAlgError:
            dx = -np.linalg.lstsq(H, g, rcond=None)[0]
        dec = max(-g @ dx, 0.0)
        if dec / 2.0 < tol:
            return x, True
        if dec < 1e-6 and dec > 0.5 * prev:
            # stagnating at the round-off floor
            return x, True
        prev = dec
        lam = np.sqrt(dec)
        step = 1.0 if lam < 0.25 else 1.0 / (1.0 + lam)
        while step > 1e-14 and not np.isfinite(barrier.value(x + step * dx)):
            step *= 0.5
        if step <= 1e-14:
            return x, dec < 1e-6
        x = x + step * dx
    return x, dec < 1e-6


def _initial_tau(barrier, c, x):
    """Weight that makes ``x`` as close to centered as possible (Hessian norm)."""
    g, H = barrier.derivatives(x)
    try:
        Hc = np.linalg.solve(H, c)
    except np.linalg.LinAlgError:
        return 1.0
    denom = c @ Hc
    if denom <= 0:
        return 1.0
    return float(np.clip(-(g @ Hc) / denom, 1e-8, 1e8))


def _path_follow(barrier, c, x, gap_tol, tau=None, mu=10.0, stop=None, max_outer=80):
    """Follow the central path until the gap bound ``nu/tau`` drops below ``gap_tol``.

    Returns ``(x, tau, converged)``. If centering breaks down at some stage
    (working precision exhausted), the last well-centered point is returned.
    """
    last = None
    if tau is None:
        tau = _initial_tau(barrier, c, x)
    for _ in range(max_outer):
        y, centered = _center(barrier, c, tau, x)
        if not centered:
            if last is not None:
                return last[0], last[1], False
            return y, tau, False
        x, last = y, (y, tau)
        if stop is not None and stop(x, barrier.nu / tau):
            return x, tau, True
        if barrier.nu / tau < gap_tol:
            return x, tau, True
        tau *= mu
    return x, tau, False


def _phase_one(red, bound, stop_early=False):
    """Maximize ``t`` subject to ``F_i(w) - t I ⪰ 0`` and ``|w_k| <= bound``."""
    d = red.Nz.shape[1]
    nx = d + 1
    blocks = []
    for b in red.blocks:
        r = b.F0.shape[0]
        F = np.concatenate([b.F, -np.eye(r)[None]], axis=0)
        blocks.append((b.F0, F))
    h = np.full(2 * d, float(bound))
    Gl = np.zeros((2 * d, nx))
    Gl[:d, :d] = -np.eye(d)
    Gl[d:, :d] = np.eye(d)
    barrier = _Barrier(blocks, h, Gl)
    c = np.zeros(nx)
    c[-1] = 1.0
    x = np.zeros(nx)
    lam0 = min(np.linalg.eigvalsh(b.F0)[0] for b in red.blocks)
    x[-1] = lam0 - 1.0
    # once the margin is positive and exceeds the gap bound, the point is
    # strictly feasible and reasonably central
    stop = None if not stop_early else (lambda y, gap: y[-1] > 1e-9 and gap < y[-1])
    x, tau, ok = _path_follow(barrier, c, x, gap_tol=1e-12, stop=stop)
    Zs, _ = barrier.duals(x, tau)
    return x[:d], x[-1], Zs, ok


def _block_matrices(red, w):
    return [b.F0 + np.tensordot(w, b.F, axes=1) for b in red.blocks]


def _original_min_eigs(problem, z):
    eigs = []
    for con in problem.constraints:
        if con.kind == "psd":
            M = con.expr.value(z)
            eigs.append(float(np.linalg.eigvalsh(0.5 * (M + M.T))[0]))
    return eigs


def _violation(problem, z, eps):
    worst = 0.0
    for con in problem.constraints:
        M = con.expr.value(z)
        if con.kind == "psd":
            lam = np.linalg.eigvalsh(0.5 * (M + M.T))[0]
            worst = max(worst, (eps if con.strict else 0.0) - lam)
        elif con.kind == "zero":
            worst = max(worst, np.max(np.abs(M), initial=0.0))
        else:
            worst = max(worst, np.max(np.abs(M - M.T), initial=0.0))
    return float(worst)


def _lift_dual(red, problem, Zs):
    """Express reduced dual blocks in the coordinates of the original constraints."""
    sizes = [con.expr.shape[0] for con in problem.constraints if con.kind == "psd"]
    out = [np.zeros((s, s)) for s in sizes]
    for b, Z in zip(red.blocks, Zs):
        out[b.index] = b.W @ Z @ b.W.T / b.scale
    return out


def _pairings(red, Zs):
    """``<Z, F_k>`` for every reduced direction ``k``."""
    d = red.Nz.shape[1]
    p = np.zeros(d)
    for b, Z in zip(red.blocks, Zs):
        p += np.tensordot(b.F, Z, axes=([1, 2], [0, 1]))
    return p


def _polish_certificate(red, Zs):
    """Smallest symmetric correction of the dual blocks that zeroes every pairing.

    Phase one stops once infeasibility is evident, so its dual pairings are
    only approximately zero. The correction is kept when the blocks stay
    positive semidefinite.
    """
    pair = _pairings(red, Zs)
    if not pair.size:
        return Zs
    rows = np.hstack([b.F.reshape(b.F.shape[0], -1) for b in red.blocks])
    coef = np.linalg.lstsq(rows @ rows.T, -pair, rcond=None)[0]
    flat = rows.T @ coef
    out, k = [], 0
    for b, Z in zip(red.blocks, Zs):
        size = Z.size
        D = flat[k:k + size].reshape(Z.shape)
        k += size
        out.append(Z + 0.5 * (D + D.T))
    if all(np.linalg.eigvalsh(Z)[0] >= -1e-14 * max(1.0, np.max(np.abs(Z))) for Z in out):
        return out
    return Zs


PHASE_ONE_BOUND = 1e3


def solve_feasibility(problem: LmiProblem) -> LmiSolution:
    """Find a point satisfying every constraint, strict blocks with margin ``eps``.

    Returns a solution with status ``Feasible`` and a witness, ``Infeasible``
    with a dual certificate, or ``NumericalFailure``.
    """
    eps = get_tolerances().strict_lmi
    if problem.objective is not None:
        raise MalformedProblem("solve_feasibility expects a problem without objective")
    red, cert = _reduce(problem)
    if red is None:
        return LmiSolution(INFEASIBLE, certificate=cert, epsilon=eps, message=cert["reason"])
    has_strict = any(con.strict for con in problem.constraints if con.kind == "psd")
    if not red.blocks:
        z = red.z0
        return _finish_feasible(problem, z, eps)

    w, t, Zs, ok = _phase_one(red, PHASE_ONE_BOUND, stop_early=True)
    z = red.z0 + red.Nz @ w
    if has_strict and red.homogeneous and t > 1e-9:
        # scale the witness up until every strict block clears eps
        lam = min(e for e, con in zip(_original_min_eigs(problem, z),
                                      [c for c in problem.constraints if c.kind == "psd"]) if con.strict)
        if 0 < lam < 10 * eps:
            z = z * (10 * eps / lam)
    violation = _violation(problem, z, eps)
    if violation <= 1e-9 and (not has_strict or t > 1e-9):
        return _finish_feasible(problem, z, eps)
    if t < -1e-9 or (has_strict and t <= 1e-9):
        Zs = _polish_certificate(red, Zs)
        dual = _lift_dual(red, problem, Zs)
        pair = _pairings(red, Zs)
        cert = {
            "reason": "no point satisfies the constraints with the required margin",
            "phase_one_value": float(t),
            "dual": [Z.tolist() for Z in dual],
            "max_abs_pairing": float(np.max(np.abs(pair), initial=0.0)),
            "constant_pairing": float(sum(np.sum(b.F0 * Z) for b, Z in zip(red.blocks, Zs))),
        }
        return LmiSolution(INFEASIBLE, dual=dual, certificate=cert, epsilon=eps,
                           message=cert["reason"], z=z, worst_violation=violation)
    return LmiSolution(NUMERICAL_FAILURE, z=z, worst_violation=violation, epsilon=eps,
                       message=f"phase one ended at margin {t:.3g} without a conclusive answer"
                               + ("" if ok else " (path following did not converge)"))


def _finish_feasible(problem, z, eps):
    return LmiSolution(
        FEASIBLE, values=problem.unpack(z), z=z,
        worst_violation=max(0.0, _violation(problem, z, eps)),
        min_eigenvalues=_original_min_eigs(problem, z), epsilon=eps,
        message="feasible point found")


PHASE_TWO_BOUND = 1e8
ACCEPTABLE_GAP = 1e-7


def solve_trace_max(problem: LmiProblem, gap_tol=1e-10, start_shift=None) -> LmiSolution:
    """Maximize the trace objective subject to the (non-strict) constraints.

    ``start_shift`` perturbs the interior starting point; the optimum does not
    depend on it, which is what the uniqueness tests exercise.

    Raises
    ------
    LmiInfeasible
        If no point satisfies the constraints.
    LmiUnbounded
        If the objective grows without bound over the feasible set.
    """
    eps = get_tolerances().strict_lmi
    if problem.objective is None:
        raise MalformedProblem("solve_trace_max needs a trace objective")
    if any(con.strict for con in problem.constraints if con.kind == "psd"):
        raise MalformedProblem("trace maximization supports non-strict constraints only")
    red, cert = _reduce(problem)
    if red is None:
        raise LmiInfeasible(cert["reason"], LmiSolution(INFEASIBLE, certificate=cert))
    d = red.Nz.shape[1]
    if not red.blocks:
        if d and np.max(np.abs(red.c)) > 0:
            raise LmiUnbounded("objective is unconstrained")
        z = red.z0
        return LmiSolution(OPTIMAL, values=problem.unpack(z), z=z, objective=red.c0, duality_gap=0.0,
                           kkt_residual=0.0, worst_violation=_violation(problem, z, eps), epsilon=eps)

    w, t, Zs, _ = _phase_one(red, PHASE_ONE_BOUND, stop_early=True)
    if t < -1e-9:
        dual = _lift_dual(red, problem, Zs)
        sol = LmiSolution(INFEASIBLE, dual=dual, certificate={
            "phase_one_value": float(t), "dual": [Z.tolist() for Z in dual]}, epsilon=eps)
        raise LmiInfeasible("constraints are infeasible", sol)
    if t <= 1e-9:
        return LmiSolution(NUMERICAL_FAILURE, epsilon=eps,
                           message=f"feasible set has (numerically) empty interior, margin {t:.3g}")
    if start_shift is not None:
        w = _shift_inside(red, w, np.asarray(start_shift, dtype=float))

    blocks = [(b.F0, b.F) for b in red.blocks]
    h = np.full(2 * d, PHASE_TWO_BOUND)
    Gl = np.vstack([-np.eye(d), np.eye(d)])
    barrier = _Barrier(blocks, h, Gl)
    cscale = max(1.0, np.max(np.abs(red.c)))
    c = red.c / cscale
    w, tau, _ = _path_follow(barrier, c, w, gap_tol=gap_tol)
    if np.max(np.abs(w), initial=0.0) > 0.5 * PHASE_TWO_BOUND:
        raise LmiUnbounded("objective appears unbounded over the feasible set")
    Zs, lin = barrier.duals(w, tau, c)
    pair = _pairings(red, Zs)
    kkt = float(np.max(np.abs(c + pair + Gl.T @ lin), initial=0.0)) * cscale
    z = red.z0 + red.Nz @ w
    gap = barrier.nu / tau * cscale
    ok = gap <= ACCEPTABLE_GAP * (1.0 + abs(red.c0 + red.c @ w))
    status = OPTIMAL if ok else NUMERICAL_FAILURE
    return LmiSolution(
        status, values=problem.unpack(z), z=z,
        objective=float(red.c0 + red.c @ w), duality_gap=gap, kkt_residual=kkt,
        dual=_lift_dual(red, problem, Zs), worst_violation=max(0.0, _violation(problem, z, eps)),
        min_eigenvalues=_original_min_eigs(problem, z), epsilon=eps,
        message="optimal" if ok else f"path following stalled at duality gap {gap:.3g}")


def _shift_inside(red, w, shift):
    """Move ``w`` towards ``w + shift`` while staying strictly interior."""
    shift = np.broadcast_to(shift.ravel()[: len(w)] if shift.ndim else shift, w.shape)
    for alpha in (1.0, 0.5, 0.25, 0.1, 0.01):
        y = w + alpha * shift
        mats = _block_matrices(red, y)
        if all(np.linalg.eigvalsh(M)[0] > 0 for M in mats):
            return y
    return w
