"""Ground truth for tests and certificates.

Simulates known systems, parametrizes the set of systems consistent with a
data set, and checks a controller against many members of that set. The
consistent set is an affine family: one particular member plus any matrix
whose rows lie in the left null space of ``[X_-; U_-]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import BlockMatrices, Experiment
from .dynamic_feedback import Compensator
from .errors import DimensionMismatch
from .jsonutil import to_jsonable
from .numerics import as_matrix, left_nullspace_basis, spectral_radius

EXTREME_SCALE = 10.0
COST_HORIZON = 500
NILPOTENCY_TOL = 1e-8


@dataclass
class SystemModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray | None = None
    D: np.ndarray | None = None

    def __post_init__(self):
        self.A = as_matrix(self.A, "A")
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {self.A.shape}")
        self.B = np.asarray(self.B, dtype=float).reshape(n, -1)
        if self.C is not None:
            self.C = np.asarray(self.C, dtype=float).reshape(-1, n)
            if self.D is None:
                self.D = np.zeros((self.C.shape[0], self.B.shape[1]))
            self.D = np.asarray(self.D, dtype=float).reshape(self.C.shape[0], self.B.shape[1])
        elif self.D is not None:
            raise DimensionMismatch("D given without C")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return 0 if self.C is None else self.C.shape[0]

    def to_json(self):
        out = {"A": self.A, "B": self.B}
        if self.C is not None:
            out.update(C=self.C, D=self.D)
        return to_jsonable(out)

    @classmethod
    def from_json(cls, obj):
        n = len(obj["A"])
        A = np.asarray(obj["A"], dtype=float).reshape(n, n)
        B = np.asarray(obj.get("B", np.zeros((n, 0))), dtype=float).reshape(n, -1)
        C = obj.get("C")
        D = obj.get("D")
        if C is not None:
            C = np.asarray(C, dtype=float).reshape(-1, n)
            D = None if D is None else np.asarray(D, dtype=float).reshape(C.shape[0], B.shape[1])
        return cls(A, B, C, D)


def simulate(sys: SystemModel, x0, u) -> Experiment:
    """Run ``x(t+1) = A x(t) + B u(t)`` (and ``y = C x + D u`` when ``C`` is set).

    ``u`` is ``(m, T)``; for a single input a flat length-``T`` sequence is
    accepted too.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != sys.n:
        raise DimensionMismatch(f"x0 has length {x0.size}, expected n = {sys.n}")
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        if sys.m != 1 and not (sys.m == 0 and u.size == 0):
            raise DimensionMismatch("a flat input sequence needs m = 1")
        u = u.reshape(sys.m, -1) if sys.m else np.zeros((0, 0))
    if u.ndim != 2 or u.shape[0] != sys.m:
        raise DimensionMismatch(f"u has shape {u.shape}, expected ({sys.m}, T)")
    T = u.shape[1]
    x = np.empty((sys.n, T + 1))
    x[:, 0] = x0
    for t in range(T):
        x[:, t + 1] = sys.A @ x[:, t] + sys.B @ u[:, t]
    y = None
    if sys.C is not None:
        y = sys.C @ x[:, :T] + sys.D @ u
    return Experiment(u, x, y)


# ---------------------------------------------------------------------------
# Consistent set
# ---------------------------------------------------------------------------

@dataclass
class ConsistentSetParam:
    """``particular + sum_ij c_ij e_i N_j``: row ``i`` of the stacked system
    matrix moves freely along the left-null directions ``N_j``."""

    particular: SystemModel
    null_rows: np.ndarray
    with_outputs: bool = False
    data: BlockMatrices | None = field(default=None, repr=False)

    @property
    def null_dimension(self):
        return self.null_rows.shape[0]

    @property
    def free_rows(self):
        """Number of stacked-matrix rows that move: ``n`` or ``n + p``."""
        return self.particular.n + self.particular.p

    def _stacked(self):
        s = self.particular
        top = np.hstack([s.A, s.B])
        if self.with_outputs:
            return np.vstack([top, np.hstack([s.C, s.D])])
        return top

    def _split(self, G):
        n, m = self.particular.n, self.particular.m
        A, B = G[:n, :n], G[:n, n:]
        if self.with_outputs:
            return SystemModel(A, B, G[n:, :n], G[n:, n:])
        return SystemModel(A, B)

    @property
    def null_basis(self) -> list[SystemModel]:
        """One element per (row, null direction) pair."""
        out = []
        zero = np.zeros_like(self._stacked())
        for i in range(self.free_rows):
            for v in self.null_rows:
                E = zero.copy()
                E[i] = v
                out.append(self._split(E))
        return out

    def member(self, coefficients=None) -> SystemModel:
        """System for a ``free_rows x null_dimension`` coefficient matrix."""
        if coefficients is None or self.null_dimension == 0:
            return self._split(self._stacked())
        c = np.asarray(coefficients, dtype=float).reshape(self.free_rows, self.null_dimension)
        return self._split(self._stacked() + c @ self.null_rows)

    def residual(self, sys: SystemModel) -> float:
        """Largest entry of the data equation residual for ``sys``."""
        bm = self.data
        r = np.max(np.abs(bm.X_plus - sys.A @ bm.X_minus - sys.B @ bm.U_minus), initial=0.0)
        if self.with_outputs and bm.Y_minus is not None:
            r = max(r, np.max(np.abs(bm.Y_minus - sys.C @ bm.X_minus - sys.D @ bm.U_minus), initial=0.0))
        return float(r)

    def to_json(self):
        return to_jsonable({"particular": self.particular, "null_rows": self.null_rows,
                            "null_dimension": self.null_dimension, "with_outputs": self.with_outputs})


def consistent_set(bm: BlockMatrices, with_outputs: bool = False) -> ConsistentSetParam:
    D = bm.stacked
    lhs = bm.X_plus
    if with_outputs:
        if bm.Y_minus is None:
            raise DimensionMismatch("output data are needed for the input/state/output set")
        lhs = np.vstack([bm.X_plus, bm.Y_minus])
    G = lhs @ np.linalg.pinv(D)
    n = bm.n
    if with_outputs:
        particular = SystemModel(G[:n, :n], G[:n, n:], G[n:, :n], G[n:, n:])
    else:
        particular = SystemModel(G[:, :n], G[:, n:])
    return ConsistentSetParam(particular, left_nullspace_basis(D), with_outputs, bm)


# ---------------------------------------------------------------------------
# Controllers and verification
# ---------------------------------------------------------------------------

GAIN = "gain"
DEADBEAT = "deadbeat"
LQ = "lq"
COMPENSATOR = "compensator"
KINDS = (GAIN, DEADBEAT, LQ, COMPENSATOR)


@dataclass
class Controller:
    """A static gain (checked for stability, nilpotency or LQ optimality) or a compensator."""

    kind: str
    K: np.ndarray
    L: np.ndarray | None = None
    M: np.ndarray | None = None
    Q: np.ndarray | None = None
    R: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown controller kind {self.kind!r}")
        self.K = np.atleast_2d(np.asarray(self.K, dtype=float))
        if self.kind == COMPENSATOR:
            comp = Compensator(self.K, self.L, self.M)
            self.L, self.M = comp.L, comp.M
        if self.kind == LQ:
            if self.Q is None or self.R is None:
                raise ValueError("an LQ controller needs weights Q and R")
            self.Q = as_matrix(self.Q, "Q")
            self.R = as_matrix(self.R, "R")

    @property
    def size(self):
        parts = [self.K] + [P for P in (self.L, self.M) if P is not None]
        return max(float(np.max(np.abs(P), initial=0.0)) for P in parts)

    def closed_loop(self, sys: SystemModel):
        if self.kind == COMPENSATOR:
            if sys.C is None:
                raise DimensionMismatch("a compensator needs a system with outputs")
            return Compensator(self.K, self.L, self.M).closed_loop(sys.A, sys.B, sys.C, sys.D)
        if self.K.shape != (sys.m, sys.n):
            raise DimensionMismatch(f"K has shape {self.K.shape}, expected {(sys.m, sys.n)}")
        return sys.A + sys.B @ self.K

    def to_json(self):
        out = {"kind": self.kind, "K": self.K}
        for name in ("L", "M", "Q", "R"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        return to_jsonable(out)

    @classmethod
    def from_json(cls, obj):
        kind = obj.get("kind", COMPENSATOR if "L" in obj else GAIN)
        return cls(kind, **{k: np.asarray(obj[k], dtype=float)
                            for k in ("K", "L", "M", "Q", "R") if k in obj})


@dataclass
class VerificationReport:
    kind: str
    checked: int
    worst_radius: float
    passed: bool
    falsifier: dict | None = None
    closed_loop_spread: float = 0.0
    worst_data_residual: float = 0.0
    worst_nilpotency: float | None = None
    worst_cost_gap: float | None = None

    def to_json(self):
        out = {"kind": self.kind, "checked": self.checked, "worst_radius": self.worst_radius,
               "passed": self.passed, "closed_loop_spread": self.closed_loop_spread,
               "worst_data_residual": self.worst_data_residual}
        if self.worst_nilpotency is not None:
            out["worst_nilpotency"] = self.worst_nilpotency
        if self.worst_cost_gap is not None:
            out["worst_cost_gap"] = self.worst_cost_gap
        if self.falsifier is not None:
            out["falsifier"] = self.falsifier
        return to_jsonable(out)


def _cost_matrix(M, W, horizon=COST_HORIZON):
    """Truncated ``sum_t (M^t)' W M^t`` and a bound on the neglected tail."""
    J = np.zeros_like(W)
    Mt = np.eye(M.shape[0])
    for _ in range(horizon):
        J += Mt.T @ W @ Mt
        Mt = M @ Mt
    # geometric bound on the rest: ||M^h||^2 / (1 - ||M^h||^2) times the partial sum
    q = np.linalg.norm(Mt, 2) ** 2
    tail = np.inf if q >= 1 else q / (1 - q) * np.linalg.norm(J, 2)
    return J, tail


def _lq_cost(sys, K, Q, R):
    M = sys.A + sys.B @ K
    if spectral_radius(M) >= 1:
        return np.inf, np.inf
    J, tail = _cost_matrix(M, Q + K.T @ R @ K)
    return float(np.trace(J)), tail


def _cost_gap(sys, ctrl, rng, directions=4, step=1e-2):
    """Relative amount by which nearby gains beat ``K`` in summed cost over unit initial states.

    Optimality means no perturbation lowers the cost, so a gap above the
    truncation error falsifies the gain.
    """
    base, tail = _lq_cost(sys, ctrl.K, ctrl.Q, ctrl.R)
    if not np.isfinite(base):
        return np.inf
    gap = 0.0
    scale = step * max(1.0, float(np.max(np.abs(ctrl.K), initial=0.0)))
    for _ in range(directions):
        delta = rng.standard_normal(ctrl.K.shape)
        delta *= scale / max(np.linalg.norm(delta), 1e-300)
        for sign in (1.0, -1.0):
            cost, _ = _lq_cost(sys, ctrl.K + sign * delta, ctrl.Q, ctrl.R)
            if np.isfinite(cost):
                gap = max(gap, (base - cost - tail) / max(1.0, base))
    return gap


def _coefficient_draws(param, samples, rng, size):
    """Particular member, axis-aligned extremes, then standard normal draws."""
    shape = (param.free_rows, param.null_dimension)
    draws = [np.zeros(shape)]
    if param.null_dimension:
        for amplitude in (EXTREME_SCALE, EXTREME_SCALE * (1.0 + size)):
            for i in range(shape[0]):
                for j in range(shape[1]):
                    for sign in (1.0, -1.0):
                        c = np.zeros(shape)
                        c[i, j] = sign * amplitude
                        draws.append(c)
        draws.extend(rng.standard_normal(shape) for _ in range(samples))
    return draws


def verify_controller(param: ConsistentSetParam, ctrl: Controller, samples: int = 100,
                      radius_bound: float = 1.0, seed=0, rng=None) -> VerificationReport:
    """Try to falsify ``ctrl`` on members of the consistent set.

    A gain or compensator fails on a member whose closed loop has spectral
    radius ``>= radius_bound``; a deadbeat gain also fails when the ``n``-th
    closed-loop power is not zero; an LQ gain also fails when a nearby gain
    achieves a lower simulated cost. Falsification is reported, never raised.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    if ctrl.kind == COMPENSATOR and not param.with_outputs:
        raise DimensionMismatch("verifying a compensator needs the input/state/output consistent set")
    worst_radius, spread, worst_res = -np.inf, 0.0, 0.0
    worst_nil = 0.0 if ctrl.kind == DEADBEAT else None
    worst_gap = 0.0 if ctrl.kind == LQ else None
    falsifier = None
    reference = None
    draws = _coefficient_draws(param, samples, rng, ctrl.size)
    for idx, c in enumerate(draws):
        sys = param.member(c)
        worst_res = max(worst_res, param.residual(sys))
        M = ctrl.closed_loop(sys)
        if reference is None:
            reference = M
        spread = max(spread, float(np.max(np.abs(M - reference), initial=0.0)))
        rho = spectral_radius(M)
        worst_radius = max(worst_radius, rho)
        reasons = []
        if rho >= radius_bound:
            reasons.append(f"spectral radius {rho:.6g} >= {radius_bound:g}")
        if ctrl.kind == DEADBEAT:
            nil = float(np.max(np.abs(np.linalg.matrix_power(M, sys.n)), initial=0.0))
            worst_nil = max(worst_nil, nil)
            if nil >= NILPOTENCY_TOL:
                reasons.append(f"n-th closed-loop power has size {nil:.3g}")
        if ctrl.kind == LQ and not reasons:
            gap = _cost_gap(sys, ctrl, rng)
            worst_gap = max(worst_gap, gap)
            if gap > 1e-9:
                reasons.append(f"a nearby gain lowers the cost by a relative {gap:.3g}")
        if reasons and falsifier is None:
            falsifier = {"sample": idx, "coefficients": c, "system": sys.to_json(),
                         "radius": rho, "reasons": reasons}
    return VerificationReport(ctrl.kind, len(draws), float(worst_radius), falsifier is None, falsifier,
                              spread, worst_res, worst_nil, worst_gap)
