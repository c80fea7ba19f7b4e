"""Trajectory containers, block data matrices, Hankel matrices and file I/O.

Signals inside :class:`Experiment` are stored column-per-sample, i.e. ``u``
has shape ``(m, T)`` and ``x`` has shape ``(n, T + 1)``. The JSON and CSV
formats are time-major (one row per sample) and are transposed on the way
in and out.

JSON layout::

    {"n": 2, "m": 1, "p": 0,
     "experiments": [{"u": [[...], ...], "x": [[...], ...], "y": [[...], ...]}]}

``x`` and ``y`` are optional per experiment.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DepthTooLarge, DimensionMismatch, MissingStates, MultiExperimentError
from .numerics import rank_tol


@dataclass
class Experiment:
    """One measured trajectory, column-per-sample.

    ``u`` is ``(m, T)``, ``x`` is ``(n, T + 1)`` and ``y`` is ``(p, T)``.
    Use :meth:`from_time_major` to build one from lists of sample vectors.
    """

    u: np.ndarray
    x: np.ndarray | None = None
    y: np.ndarray | None = None

    def __post_init__(self):
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float))
        T = self.u.shape[1]
        if self.x is not None:
            self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
            if self.x.shape[1] != T + 1:
                raise DimensionMismatch(f"x has {self.x.shape[1]} samples, expected T + 1 = {T + 1}")
        if self.y is not None:
            self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
            if self.y.shape[1] != T:
                raise DimensionMismatch(f"y has {self.y.shape[1]} samples, expected T = {T}")

    @classmethod
    def from_time_major(cls, u, x=None, y=None):
        u_arr = np.asarray(u, dtype=float)
        T = u_arr.shape[0]
        u_cols = u_arr.reshape(T, -1).T
        def cols(a):
            a = np.asarray(a, dtype=float)
            return a.reshape(a.shape[0], -1).T

        x_cols = None if x is None else cols(x)
        y_cols = None if y is None else cols(y)
        return cls(u_cols, x_cols, y_cols)

    @property
    def T(self) -> int:
        return self.u.shape[1]


@dataclass
class DataSet:
    experiments: list[Experiment]
    n: int
    m: int
    p: int = 0

    def __post_init__(self):
        if not self.experiments:
            raise DimensionMismatch("a data set needs at least one experiment")
        for i, e in enumerate(self.experiments):
            if e.u.shape[0] != self.m:
                raise DimensionMismatch(f"experiment {i}: input dimension {e.u.shape[0]} != m = {self.m}")
            if e.x is not None and e.x.shape[0] != self.n:
                raise DimensionMismatch(f"experiment {i}: state dimension {e.x.shape[0]} != n = {self.n}")
            if e.y is not None and e.y.shape[0] != self.p:
                raise DimensionMismatch(f"experiment {i}: output dimension {e.y.shape[0]} != p = {self.p}")
        if self.T < 1:
            raise DimensionMismatch("total number of samples must be at least 1")

    @property
    def T(self) -> int:
        return sum(e.T for e in self.experiments)

    @property
    def has_outputs(self) -> bool:
        return all(e.y is not None for e in self.experiments)

    def single(self) -> Experiment:
        if len(self.experiments) != 1:
            raise MultiExperimentError(
                f"operation needs a single experiment, data set has {len(self.experiments)}")
        return self.experiments[0]


@dataclass
class BlockMatrices:
    """Stacked data matrices ``U_-``, ``X_-``, ``X_+`` and optionally ``Y_-``."""

    U_minus: np.ndarray
    X_minus: np.ndarray
    X_plus: np.ndarray
    Y_minus: np.ndarray | None = None
    boundaries: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.X_minus = np.atleast_2d(np.asarray(self.X_minus, dtype=float))
        self.X_plus = np.atleast_2d(np.asarray(self.X_plus, dtype=float))
        T = self.X_minus.shape[1]
        if self.U_minus is None:
            self.U_minus = np.zeros((0, T))
        self.U_minus = np.atleast_2d(np.asarray(self.U_minus, dtype=float))
        if self.U_minus.size == 0:
            self.U_minus = np.zeros((self.U_minus.shape[0] if self.U_minus.shape[1] == T else 0, T))
        if self.U_minus.shape[1] != T:
            raise DimensionMismatch("U_minus column count differs from X_minus")
        if self.Y_minus is not None:
            self.Y_minus = np.atleast_2d(np.asarray(self.Y_minus, dtype=float))
        if self.X_plus.shape != self.X_minus.shape:
            raise DimensionMismatch(f"X_plus {self.X_plus.shape} and X_minus {self.X_minus.shape} differ")
        if self.Y_minus is not None and self.Y_minus.shape[1] != T:
            raise DimensionMismatch("Y_minus column count differs from X_minus")
        if not self.boundaries:
            self.boundaries = [T]

    @property
    def n(self) -> int:
        return self.X_minus.shape[0]

    @property
    def m(self) -> int:
        return self.U_minus.shape[0]

    @property
    def T(self) -> int:
        return self.X_minus.shape[1]

    @property
    def stacked(self) -> np.ndarray:
        """``[X_-; U_-]``."""
        return np.vstack([self.X_minus, self.U_minus])

    @classmethod
    def from_states(cls, X, U_minus=None, Y_minus=None):
        """Build from a single state trajectory ``X = [x(0) ... x(T)]``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        T = X.shape[1] - 1
        U = np.zeros((0, T)) if U_minus is None else np.atleast_2d(np.asarray(U_minus, dtype=float))
        return cls(U, X[:, :-1], X[:, 1:], Y_minus)

    def column_normalized(self):
        """Copy with every column of ``[X_-; U_-; X_+; Y_-]`` scaled to unit norm, and the scales.

        Scaling columns changes neither the consistent set nor the set of
        matrices ``P`` satisfying the data-based LMIs, but it evens out data
        whose states grow over the experiment.
        """
        parts = [self.X_minus, self.U_minus, self.X_plus]
        norms = np.sqrt(sum(np.sum(P ** 2, axis=0) for P in parts))
        d = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 1.0)
        Y = None if self.Y_minus is None else self.Y_minus * d
        return BlockMatrices(self.U_minus * d, self.X_minus * d, self.X_plus * d, Y), d

    def columns(self, idx) -> "BlockMatrices":
        """Sub-data made of the given columns (keeps column pairing)."""
        idx = np.asarray(idx)
        Y = None if self.Y_minus is None else self.Y_minus[:, idx]
        return BlockMatrices(self.U_minus[:, idx], self.X_minus[:, idx], self.X_plus[:, idx], Y)


def assemble(data: DataSet) -> BlockMatrices:
    """Concatenate the shifted per-experiment slices into ``U_-, X_-, X_+, Y_-``."""
    Us, Xm, Xp, Ys, bounds = [], [], [], [], []
    for i, e in enumerate(data.experiments):
        if e.x is None:
            raise MissingStates(f"experiment {i} carries no state trajectory")
        if e.T < 1:
            raise DimensionMismatch(f"experiment {i} is empty")
        Us.append(e.u)
        Xm.append(e.x[:, :-1])
        Xp.append(e.x[:, 1:])
        if e.y is not None:
            Ys.append(e.y)
        bounds.append(e.T + (bounds[-1] if bounds else 0))
    Y = np.hstack(Ys) if data.has_outputs and data.p > 0 else None
    return BlockMatrices(np.hstack(Us), np.hstack(Xm), np.hstack(Xp), Y, bounds)


def hankel(f, depth: int) -> np.ndarray:
    """Block Hankel matrix with ``depth`` block rows of a time-major signal.

    ``f`` is a sequence of ``T`` samples (scalars or vectors). Block ``(i, j)``
    of the result is ``f(i + j)``; there are ``T - depth + 1`` columns.
    """
    F = np.asarray(f, dtype=float)
    if F.ndim == 1:
        F = F.reshape(-1, 1)
    T, dim = F.shape
    if depth < 1:
        raise DepthTooLarge(f"depth must be positive, got {depth}")
    if depth >= T:
        raise DepthTooLarge(f"depth {depth} must be smaller than the number of samples {T}")
    cols = T - depth + 1
    H = np.empty((depth * dim, cols))
    for i in range(depth):
        H[i * dim:(i + 1) * dim, :] = F[i:i + cols].T
    return H


def persistency_order(u) -> int:
    """Largest ``L`` for which the depth-``L`` Hankel matrix of ``u`` has full row rank."""
    U = np.asarray(u, dtype=float)
    if U.ndim == 1:
        U = U.reshape(-1, 1)
    T, m = U.shape
    order = 0
    for L in range(1, T):
        if T - L + 1 < m * L:
            break
        if rank_tol(hankel(U, L)) != m * L:
            break
        order = L
    return order


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def _time_major(arr):
    return None if arr is None else np.asarray(arr).T.tolist()


def dataset_to_dict(data: DataSet) -> dict:
    exps = []
    for e in data.experiments:
        d = {"u": _time_major(e.u)}
        if e.x is not None:
            d["x"] = _time_major(e.x)
        if e.y is not None:
            d["y"] = _time_major(e.y)
        exps.append(d)
    return {"n": int(data.n), "m": int(data.m), "p": int(data.p), "experiments": exps}


def dataset_from_dict(obj: dict) -> DataSet:
    try:
        n, m, p = int(obj["n"]), int(obj["m"]), int(obj.get("p", 0))
        raw = obj["experiments"]
    except (KeyError, TypeError) as exc:
        raise DimensionMismatch(f"malformed data file: {exc}") from exc
    exps = []
    for i, e in enumerate(raw):
        u = np.asarray(e["u"], dtype=float)
        T = u.shape[0]
        u = u.reshape(T, m).T
        x = None if e.get("x") is None else np.asarray(e["x"], dtype=float).reshape(T + 1, n).T
        y = None if e.get("y") is None else np.asarray(e["y"], dtype=float).reshape(T, p).T
        exps.append(Experiment(u, x, y))
    return DataSet(exps, n, m, p)


def load_dataset(path) -> DataSet:
    with open(path) as fh:
        return dataset_from_dict(json.load(fh))


def dump_dataset(data: DataSet, path=None) -> str:
    text = json.dumps(dataset_to_dict(data))
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _read_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def load_csv_experiment(u_path, x_path=None, y_path=None) -> DataSet:
    """Single-experiment data set from one CSV file per signal (rows = time)."""
    u = _read_csv(u_path)
    x = None if x_path is None else _read_csv(x_path)
    y = None if y_path is None else _read_csv(y_path)
    m = u.shape[1]
    n = x.shape[1] if x is not None else 0
    p = y.shape[1] if y is not None else 0
    exp = Experiment(u.T, None if x is None else x.T, None if y is None else y.T)
    return DataSet([exp], n, m, p)


def load_csv_dir(directory) -> DataSet:
    """Read ``u.csv`` and, when present, ``x.csv`` and ``y.csv`` from a directory."""
    def opt(name):
        path = os.path.join(directory, name)
        return path if os.path.exists(path) else None

    return load_csv_experiment(os.path.join(directory, "u.csv"), opt("x.csv"), opt("y.csv"))


def dump_csv_experiment(exp: Experiment, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    for name, arr in (("u", exp.u), ("x", exp.x), ("y", exp.y)):
        if arr is not None:
            np.savetxt(os.path.join(directory, f"{name}.csv"), arr.T, delimiter=",", fmt="%.17g")
